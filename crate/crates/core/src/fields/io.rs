//! On-disk formats.
//!
//! Both formats are little-endian with a fixed header, a raw f64 payload,
//! and a trailing CRC32 (IEEE) of the payload bytes. Layouts:
//!
//! ```text
//! TATF field        magic "TATF" | version u16 | dim u16 | counts u32*dim
//!                   | origin f64*dim | spacing f64*dim
//!                   | payload f64*n (row-major, x fastest) | crc32 u32
//! TATS sinogram     magic "TATS" | version u16 | dim u16
//!                   | domain lo f64*dim | domain hi f64*dim
//!                   | n_detectors u32 | steps u32 | dt f64
//!                   | per detector: position f64*dim, normal f64*dim,
//!                     weight f64, arclength f64
//!                   | payload f64*(n_detectors*steps) (detector-major)
//!                   | crc32 u32
//! ```
//!
//! Writers refuse non-finite values; readers validate magic, version,
//! shape, checksum, and reject trailing bytes, so a round trip is
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use crc32fast::Hasher;

use crate::error::{Error, Result};
use crate::fields::{Detector, DomainSpec, Grid, ObservationSurface, ScalarField, Sinogram};

pub const FIELD_MAGIC: &[u8; 4] = b"TATF";
pub const SINOGRAM_MAGIC: &[u8; 4] = b"TATS";
pub const FORMAT_VERSION: u16 = 1;

/// CRC32 (IEEE) of a byte slice, as used for all payload checksums.
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut h = Hasher::new();
    h.update(bytes);
    h.finalize()
}

/// CRC32 of an f64 slice's little-endian byte image.
pub fn crc32_f64s(values: &[f64]) -> u32 {
    let mut h = Hasher::new();
    for chunk in values.chunks(4096) {
        let mut buf = Vec::with_capacity(chunk.len() * 8);
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        h.update(&buf);
    }
    h.finalize()
}

pub(crate) fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFile { path: path.display().to_string(), reason: reason.into() }
}

pub(crate) fn ensure_finite(path: &Path, what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteWrite(format!(
            "{} index {} in {}",
            what,
            i,
            path.display()
        )));
    }
    Ok(())
}

pub(crate) fn write_payload<W: Write>(w: &mut W, hasher: &mut Hasher, values: &[f64]) -> Result<()> {
    let mut buf = [0u8; 8 * 1024];
    for chunk in values.chunks(1024) {
        let bytes = &mut buf[..chunk.len() * 8];
        for (i, v) in chunk.iter().enumerate() {
            bytes[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
        }
        hasher.update(bytes);
        w.write_all(bytes)?;
    }
    Ok(())
}

pub(crate) fn read_payload<R: Read>(
    r: &mut R,
    hasher: &mut Hasher,
    n: usize,
    path: &Path,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8 * 1024];
    let mut left = n;
    while left > 0 {
        let take = left.min(1024);
        let bytes = &mut buf[..take * 8];
        r.read_exact(bytes)
            .map_err(|_| malformed(path, "truncated payload"))?;
        hasher.update(bytes);
        for i in 0..take {
            out.push(f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap()));
        }
        left -= take;
    }
    Ok(out)
}

pub(crate) fn finish_checked<R: Read>(r: &mut R, hasher: Hasher, path: &Path) -> Result<()> {
    let stored = r
        .read_u32::<LittleEndian>()
        .map_err(|_| malformed(path, "missing checksum"))?;
    let computed = hasher.finalize();
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            path: path.display().to_string(),
            stored,
            computed,
        });
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(malformed(path, "trailing bytes after checksum")),
        Err(e) => Err(Error::Io(e)),
    }
}

pub(crate) fn read_header_prefix<R: Read>(r: &mut R, magic: &[u8; 4], path: &Path) -> Result<usize> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(|_| malformed(path, "truncated header"))?;
    if &got != magic {
        return Err(malformed(path, format!("bad magic {got:?}")));
    }
    let version = r
        .read_u16::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))?;
    if version != FORMAT_VERSION {
        return Err(malformed(path, format!("unsupported version {version}")));
    }
    let dim = r
        .read_u16::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))? as usize;
    if dim != 1 && dim != 2 {
        return Err(malformed(path, format!("bad dimension {dim}")));
    }
    Ok(dim)
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    ensure_finite(path, "field value", &field.values)?;
    let g = &field.grid;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u16::<LittleEndian>(g.dim as u16)?;
    for a in 0..g.dim {
        w.write_u32::<LittleEndian>(g.counts[a] as u32)?;
    }
    for a in 0..g.dim {
        w.write_f64::<LittleEndian>(g.origin[a])?;
    }
    for a in 0..g.dim {
        w.write_f64::<LittleEndian>(g.spacing[a])?;
    }
    let mut hasher = Hasher::new();
    write_payload(&mut w, &mut hasher, &field.values)?;
    w.write_u32::<LittleEndian>(hasher.finalize())?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let dim = read_header_prefix(&mut r, FIELD_MAGIC, path)?;
    let mut counts = [1usize; 2];
    for c in counts.iter_mut().take(dim) {
        *c = r
            .read_u32::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated header"))? as usize;
        if *c < 3 {
            return Err(malformed(path, format!("axis count {c} below 3")));
        }
    }
    let mut origin = [0.0f64; 2];
    let mut spacing = [1.0f64; 2];
    for o in origin.iter_mut().take(dim) {
        *o = r
            .read_f64::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated header"))?;
    }
    for s in spacing.iter_mut().take(dim) {
        *s = r
            .read_f64::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated header"))?;
        if !(s.is_finite() && *s > 0.0) {
            return Err(malformed(path, "non-positive spacing"));
        }
    }
    let grid = Grid { dim, counts, origin, spacing };
    let mut hasher = Hasher::new();
    let values = read_payload(&mut r, &mut hasher, grid.n_points(), path)?;
    finish_checked(&mut r, hasher, path)?;
    ScalarField::from_values(grid, values)
}

pub fn write_sinogram(path: impl AsRef<Path>, g: &Sinogram) -> Result<()> {
    let path = path.as_ref();
    ensure_finite(path, "sinogram value", &g.values)?;
    if !g.dt.is_finite() {
        return Err(Error::NonFiniteWrite(format!("dt in {}", path.display())));
    }
    let dim = g.surface.domain.dim;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SINOGRAM_MAGIC)?;
    w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u16::<LittleEndian>(dim as u16)?;
    for a in 0..dim {
        w.write_f64::<LittleEndian>(g.surface.domain.lo[a])?;
    }
    for a in 0..dim {
        w.write_f64::<LittleEndian>(g.surface.domain.hi[a])?;
    }
    w.write_u32::<LittleEndian>(g.n_detectors() as u32)?;
    w.write_u32::<LittleEndian>(g.steps as u32)?;
    w.write_f64::<LittleEndian>(g.dt)?;
    for d in &g.surface.detectors {
        for a in 0..dim {
            w.write_f64::<LittleEndian>(d.position[a])?;
        }
        for a in 0..dim {
            w.write_f64::<LittleEndian>(d.normal[a])?;
        }
        w.write_f64::<LittleEndian>(d.weight)?;
        w.write_f64::<LittleEndian>(d.arclength)?;
    }
    let mut hasher = Hasher::new();
    write_payload(&mut w, &mut hasher, &g.values)?;
    w.write_u32::<LittleEndian>(hasher.finalize())?;
    w.flush()?;
    Ok(())
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let dim = read_header_prefix(&mut r, SINOGRAM_MAGIC, path)?;
    let mut lo = [0.0f64; 2];
    let mut hi = [0.0f64; 2];
    for v in lo.iter_mut().take(dim) {
        *v = r
            .read_f64::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated header"))?;
    }
    for v in hi.iter_mut().take(dim) {
        *v = r
            .read_f64::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated header"))?;
    }
    let domain = DomainSpec::new(dim, lo, hi)
        .map_err(|e| malformed(path, format!("bad domain: {e}")))?;
    let n_det = r
        .read_u32::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))? as usize;
    let steps = r
        .read_u32::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))? as usize;
    let dt = r
        .read_f64::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))?;
    if n_det == 0 {
        return Err(malformed(path, "zero detectors"));
    }
    let mut detectors = Vec::with_capacity(n_det);
    for _ in 0..n_det {
        let mut position = [0.0f64; 2];
        let mut normal = [0.0f64; 2];
        for v in position.iter_mut().take(dim) {
            *v = r
                .read_f64::<LittleEndian>()
                .map_err(|_| malformed(path, "truncated detector table"))?;
        }
        for v in normal.iter_mut().take(dim) {
            *v = r
                .read_f64::<LittleEndian>()
                .map_err(|_| malformed(path, "truncated detector table"))?;
        }
        let weight = r
            .read_f64::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated detector table"))?;
        let arclength = r
            .read_f64::<LittleEndian>()
            .map_err(|_| malformed(path, "truncated detector table"))?;
        detectors.push(Detector { position, normal, weight, arclength });
    }
    let surface = ObservationSurface { domain, detectors };
    let mut hasher = Hasher::new();
    let values = read_payload(&mut r, &mut hasher, n_det * steps, path)?;
    finish_checked(&mut r, hasher, path)?;
    Sinogram::from_values(surface, dt, steps, values)
}
