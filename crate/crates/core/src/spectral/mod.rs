//! Dirichlet eigenbasis of `-c^2 Lap` on the reconstruction domain.
//!
//! The inversion expands everything in eigenfunctions `psi_k` of `-c^2 Lap`
//! with zero boundary values, orthonormal in the weighted space
//! `L^2(B, dx/c^2)`. This module produces those bases two ways:
//!
//! * [`analytic_rectangle_basis`] — closed-form sine products for `c = 1`,
//!   exact eigenvalues and boundary traces. Sampled sine modes are exactly
//!   orthogonal under the discrete quadrature, which makes this the
//!   reference every numerical path is tested against.
//! * [`compute_eigenpairs`] — shift-invert block Lanczos for variable `c`,
//!   using the fast rectangle solve as the exact inverse.
//!
//! Each mode carries its outward normal derivative sampled at the
//! detectors, since the data-side coefficients `g_k(t)` are integrals of
//! the boundary pressure against exactly that trace.

mod lanczos;
pub mod operator;

pub use lanczos::{compute_eigenpairs, EigenOptions};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use crc32fast::Hasher;

use crate::error::{Error, Result};
use crate::fields::io::{
    ensure_finite, finish_checked, malformed, read_payload, write_payload, FORMAT_VERSION,
};
use crate::fields::{Detector, DomainSpec, Grid, ObservationSurface, ScalarField};
use crate::par;

pub const BASIS_MAGIC: &[u8; 4] = b"TATB";
/// Modes are usable on a grid while `lambda * h_max / c_min` stays below
/// this; beyond it the discrete mode no longer resolves the oscillation.
pub const RESOLVABILITY_LIMIT: f64 = 0.5;
/// Relative gap below which two eigenvalues are treated as one cluster.
pub const DEGENERACY_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    /// Mode values on the domain grid (boundary nodes exactly zero).
    pub psi: ScalarField,
    /// Outward normal derivative at each detector.
    pub trace: Vec<f64>,
}

/// A truncated eigenbasis over the reconstruction domain, together with
/// the weighted quadrature it is orthonormal under.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub domain: DomainSpec,
    pub grid: Grid,
    pub surface: ObservationSurface,
    pub pairs: Vec<EigenPair>,
    /// Node weights of the `L^2(B, dx/c^2)` quadrature: trapezoid cell
    /// volume divided by `c^2`.
    pub weights: Vec<f64>,
    /// `max_k lambda_k * h_max / c_min` for this basis and grid.
    pub resolvability: f64,
}

impl SpectralBasis {
    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Weighted inner product of two node vectors on the domain grid.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.weights.len());
        assert_eq!(v.len(), self.weights.len());
        par::dot3_chunked(u, v, &self.weights)
    }

    pub fn project_one(&self, u: &[f64], k: usize) -> f64 {
        self.inner(u, &self.pairs[k].psi.values)
    }

    /// Coefficients `<u, psi_k>_w` for all retained modes.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.weights.len());
        par::collect_vec(self.k(), |k| {
            par::dot3_chunked(u, &self.pairs[k].psi.values, &self.weights)
        })
    }

    /// `sum_k coeffs[k] psi_k` on the domain grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<ScalarField> {
        if coeffs.len() != self.k() {
            return Err(Error::Mismatch(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                self.k()
            )));
        }
        let mut out = ScalarField::zeros(self.grid.clone());
        let nx = self.grid.counts[0];
        par::for_each_row_mut(&mut out.values, nx, |iy, row| {
            let base = iy * nx;
            for (c, pair) in coeffs.iter().zip(&self.pairs) {
                if *c == 0.0 {
                    continue;
                }
                let psi = &pair.psi.values[base..base + nx];
                for (r, p) in row.iter_mut().zip(psi) {
                    *r += c * p;
                }
            }
        });
        Ok(out)
    }

    /// Largest deviation of the weighted Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        let k = self.k();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let ip = self.inner(&self.pairs[i].psi.values, &self.pairs[j].psi.values);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// Contiguous index ranges of (nearly) equal eigenvalues. Comparisons
    /// of per-mode quantities must aggregate within these ranges, since
    /// inside a degenerate eigenspace individual modes are only defined up
    /// to rotation.
    pub fn degenerate_clusters(&self, rel_tol: f64) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0usize;
        for i in 1..=self.k() {
            let split = i == self.k()
                || (self.pairs[i].lambda - self.pairs[i - 1].lambda)
                    > rel_tol * self.pairs[i].lambda;
            if split {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    pub fn check_surface(&self, other: &ObservationSurface) -> Result<()> {
        if self.surface.compatible_with(other) {
            Ok(())
        } else {
            Err(Error::Mismatch("basis and sinogram observation surfaces differ".into()))
        }
    }
}

/// Trapezoid quadrature weights of `L^2(B, dx/c^2)` on the domain grid:
/// `w_i = cell_volume * edge_factor / c_i^2`.
pub fn quadrature_weights(grid: &Grid, c: &[f64]) -> Vec<f64> {
    assert_eq!(c.len(), grid.n_points());
    let cell = if grid.dim == 2 {
        grid.spacing[0] * grid.spacing[1]
    } else {
        grid.spacing[0]
    };
    let nx = grid.counts[0];
    let ny = grid.counts[1];
    let mut w = vec![0.0; grid.n_points()];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            let mut f = if ix == 0 || ix + 1 == nx { 0.5 } else { 1.0 };
            if grid.dim == 2 && (iy == 0 || iy + 1 == ny) {
                f *= 0.5;
            }
            w[i] = cell * f / (c[i] * c[i]);
        }
    }
    w
}

/// Exact eigenvalue of the discrete 3/5-point Dirichlet operator for the
/// sine mode with per-axis indices `(n, m)`:
/// `sum_a (4/h_a^2) sin^2(k_a pi h_a / (2 side_a))`.
pub fn discrete_rectangle_eigenvalue(domain: &DomainSpec, grid: &Grid, n: usize, m: usize) -> f64 {
    let mut total = 0.0;
    let k = [n, m];
    for a in 0..domain.dim {
        let h = grid.spacing[a];
        let s = (k[a] as f64 * std::f64::consts::PI * h / (2.0 * domain.side(a))).sin();
        total += 4.0 / (h * h) * s * s;
    }
    total
}

/// Number of rectangle modes (with `c = 1`) that satisfy the
/// resolvability bound `lambda * h_max / c_min <= 1/2` on `grid`.
pub fn resolvable_mode_count(domain: &DomainSpec, grid: &Grid, c_min: f64) -> usize {
    let limit = RESOLVABILITY_LIMIT * c_min / grid.h_max();
    let pi = std::f64::consts::PI;
    if domain.dim == 1 {
        return (limit * domain.side(0) / pi).floor() as usize;
    }
    let (a, b) = (domain.side(0), domain.side(1));
    let q = (limit / pi) * (limit / pi);
    let mut count = 0usize;
    let n_max = (limit * a / pi).floor() as usize;
    for n in 1..=n_max {
        let rem = q - (n as f64 / a).powi(2);
        if rem <= 0.0 {
            break;
        }
        count += (rem.sqrt() * b).floor() as usize;
    }
    count
}

fn side_of(normal: [f64; 2], dim: usize) -> usize {
    // 0: -x, 1: +x, 2: -y, 3: +y
    if dim == 1 || normal[1] == 0.0 {
        if normal[0] < 0.0 {
            0
        } else {
            1
        }
    } else if normal[1] < 0.0 {
        2
    } else {
        3
    }
}

/// Second-order one-sided outward normal derivative of a field vanishing
/// on the domain boundary, sampled at every detector:
/// `-(4 psi_1 - psi_2) / (2h)` with `psi_j` interpolated `j` nodes inward.
pub fn normal_derivative_trace(
    psi: &ScalarField,
    surface: &ObservationSurface,
) -> Result<Vec<f64>> {
    let grid = &psi.grid;
    for a in 0..grid.dim {
        let ok = (grid.origin[a] - surface.domain.lo[a]).abs() <= 1e-12
            && (grid.extent_hi(a) - surface.domain.hi[a]).abs() <= 1e-12;
        if !ok {
            return Err(Error::Mismatch("field grid does not span the surface domain".into()));
        }
    }
    let nx = grid.counts[0];
    let ny = grid.counts[1];
    let mut out = Vec::with_capacity(surface.len());
    for det in &surface.detectors {
        let side = side_of(det.normal, grid.dim);
        let axis_normal = if side < 2 { 0 } else { 1 };
        let axis_along = 1 - axis_normal;
        let h = grid.spacing[axis_normal];
        // Index of the boundary line and the direction pointing inward.
        let (line0, step): (usize, isize) = match side {
            0 => (0, 1),
            1 => (nx - 1, -1),
            2 => (0, 1),
            _ => (ny - 1, -1),
        };
        let value_at = |depth: isize| -> f64 {
            let line = (line0 as isize + step * depth) as usize;
            if grid.dim == 1 {
                return psi.values[line];
            }
            // Linear interpolation along the side at the detector position.
            let u = (det.position[axis_along] - grid.origin[axis_along])
                / grid.spacing[axis_along];
            let n_along = grid.counts[axis_along];
            let cell = (u.floor() as isize).clamp(0, n_along as isize - 2) as usize;
            let fr = (u - cell as f64).clamp(0.0, 1.0);
            let at = |j: usize| -> f64 {
                if axis_normal == 0 {
                    psi.values[j * nx + line]
                } else {
                    psi.values[line * nx + j]
                }
            };
            at(cell) * (1.0 - fr) + at(cell + 1) * fr
        };
        let psi1 = value_at(1);
        let psi2 = value_at(2);
        out.push(-(4.0 * psi1 - psi2) / (2.0 * h));
    }
    Ok(out)
}

/// Closed-form Dirichlet eigenbasis of `-Lap` (homogeneous speed) on a
/// rectangle: the first `k` products of sines in ascending eigenvalue
/// order, ties broken lexicographically in the mode indices. Eigenvalues
/// and boundary traces are analytic; the sampled modes are exactly
/// orthonormal under the weighted quadrature because the discrete sine
/// sum telescopes to the continuum integral.
pub fn analytic_rectangle_basis(
    domain: &DomainSpec,
    grid: &Grid,
    surface: &ObservationSurface,
    k: usize,
) -> Result<SpectralBasis> {
    if k == 0 {
        return Err(Error::InvalidSpec("requested an empty basis".into()));
    }
    for a in 0..domain.dim {
        let ok = (grid.origin[a] - domain.lo[a]).abs() <= 1e-12
            && (grid.extent_hi(a) - domain.hi[a]).abs() <= 1e-12;
        if !ok {
            return Err(Error::Mismatch("grid does not span the domain exactly".into()));
        }
    }
    for a in 0..domain.dim {
        let ok = (surface.domain.lo[a] - domain.lo[a]).abs() <= 1e-12
            && (surface.domain.hi[a] - domain.hi[a]).abs() <= 1e-12;
        if !ok {
            return Err(Error::Mismatch("surface domain vs basis domain".into()));
        }
    }
    let pi = std::f64::consts::PI;
    let dim = domain.dim;
    let modes = enumerate_rectangle_modes(domain, k)?;
    let nx = grid.counts[0];
    let ny = grid.counts[1];
    let cells = [nx - 1, if dim == 2 { ny - 1 } else { 1 }];
    let (a, b) = (domain.side(0), if dim == 2 { domain.side(1) } else { 1.0 });
    let norm = if dim == 2 {
        2.0 / (a * b).sqrt()
    } else {
        (2.0 / a).sqrt()
    };
    let mut pairs = Vec::with_capacity(k);
    for &(n, m, lambda) in &modes {
        let mut psi = ScalarField::zeros(grid.clone());
        for iy in 0..ny {
            for ix in 0..nx {
                let edge = ix == 0
                    || ix + 1 == nx
                    || (dim == 2 && (iy == 0 || iy + 1 == ny));
                if edge {
                    continue;
                }
                let sx = (n as f64 * pi * ix as f64 / cells[0] as f64).sin();
                let sy = if dim == 2 {
                    (m as f64 * pi * iy as f64 / cells[1] as f64).sin()
                } else {
                    1.0
                };
                psi.values[iy * nx + ix] = norm * sx * sy;
            }
        }
        let mut trace = Vec::with_capacity(surface.len());
        for det in &surface.detectors {
            let v = if dim == 1 {
                // psi' = norm * (n pi / a) cos(n pi (x - lo)/a)
                let slope = norm * n as f64 * pi / a;
                match side_of(det.normal, 1) {
                    0 => -slope,
                    _ => slope * if n % 2 == 0 { 1.0 } else { -1.0 },
                }
            } else {
                let tx = (det.position[0] - domain.lo[0]) / a;
                let ty = (det.position[1] - domain.lo[1]) / b;
                let sin_x = (n as f64 * pi * tx).sin();
                let sin_y = (m as f64 * pi * ty).sin();
                let dn = norm * n as f64 * pi / a;
                let dm = norm * m as f64 * pi / b;
                let sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
                match side_of(det.normal, 2) {
                    0 => -dn * sin_y,
                    1 => dn * sign(n) * sin_y,
                    2 => -dm * sin_x,
                    _ => dm * sign(m) * sin_x,
                }
            };
            trace.push(v);
        }
        pairs.push(EigenPair { lambda, psi, trace });
    }
    let weights = quadrature_weights(grid, &vec![1.0; grid.n_points()]);
    let resolvability = pairs.last().unwrap().lambda * grid.h_max();
    Ok(SpectralBasis {
        domain: domain.clone(),
        grid: grid.clone(),
        surface: surface.clone(),
        pairs,
        weights,
        resolvability,
    })
}

/// First `k` rectangle modes as `(n, m, lambda)`, ascending in `lambda`
/// with `(n, m)`-lexicographic tie-breaking. In 1D, `m` is zero.
fn enumerate_rectangle_modes(domain: &DomainSpec, k: usize) -> Result<Vec<(usize, usize, f64)>> {
    let pi = std::f64::consts::PI;
    if domain.dim == 1 {
        let a = domain.side(0);
        return Ok((1..=k).map(|n| (n, 0, n as f64 * pi / a)).collect());
    }
    let (a, b) = (domain.side(0), domain.side(1));
    let mut cap = (k as f64).sqrt().ceil() as usize + 2;
    loop {
        let mut modes: Vec<(usize, usize, f64)> = Vec::new();
        for n in 1..=cap {
            for m in 1..=cap {
                let lambda = pi * ((n as f64 / a).powi(2) + (m as f64 / b).powi(2)).sqrt();
                modes.push((n, m, lambda));
            }
        }
        modes.sort_by(|p, q| {
            p.2.partial_cmp(&q.2)
                .unwrap()
                .then(p.0.cmp(&q.0))
                .then(p.1.cmp(&q.1))
        });
        if modes.len() >= k {
            // Everything outside the cap box has lambda at least this big;
            // if the k-th mode is below it the enumeration is complete.
            let boundary = pi * ((cap + 1) as f64) / a.max(b);
            if modes[k - 1].2 <= boundary {
                modes.truncate(k);
                return Ok(modes);
            }
        }
        cap *= 2;
        if cap > 1 << 20 {
            return Err(Error::InvalidSpec(format!("mode enumeration overflow for k = {k}")));
        }
    }
}

/// Writes a basis cache (`TATB`): grid, domain, detectors, weights, and
/// all retained modes, with the source speed checksum for invalidation.
pub fn write_basis_cache(
    path: impl AsRef<Path>,
    basis: &SpectralBasis,
    speed_crc: u32,
) -> Result<()> {
    let path = path.as_ref();
    ensure_finite(path, "weight", &basis.weights)?;
    for p in &basis.pairs {
        if !p.lambda.is_finite() {
            return Err(Error::NonFiniteWrite(format!("eigenvalue in {}", path.display())));
        }
        ensure_finite(path, "mode value", &p.psi.values)?;
        ensure_finite(path, "trace value", &p.trace)?;
    }
    let g = &basis.grid;
    let dim = g.dim;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BASIS_MAGIC)?;
    w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u16::<LittleEndian>(dim as u16)?;
    for a in 0..dim {
        w.write_u32::<LittleEndian>(g.counts[a] as u32)?;
    }
    for a in 0..dim {
        w.write_f64::<LittleEndian>(g.origin[a])?;
    }
    for a in 0..dim {
        w.write_f64::<LittleEndian>(g.spacing[a])?;
    }
    for a in 0..dim {
        w.write_f64::<LittleEndian>(basis.domain.lo[a])?;
    }
    for a in 0..dim {
        w.write_f64::<LittleEndian>(basis.domain.hi[a])?;
    }
    w.write_u32::<LittleEndian>(speed_crc)?;
    w.write_u32::<LittleEndian>(basis.surface.len() as u32)?;
    for d in &basis.surface.detectors {
        for a in 0..dim {
            w.write_f64::<LittleEndian>(d.position[a])?;
        }
        for a in 0..dim {
            w.write_f64::<LittleEndian>(d.normal[a])?;
        }
        w.write_f64::<LittleEndian>(d.weight)?;
        w.write_f64::<LittleEndian>(d.arclength)?;
    }
    w.write_u32::<LittleEndian>(basis.k() as u32)?;
    w.write_f64::<LittleEndian>(basis.resolvability)?;
    let mut hasher = Hasher::new();
    write_payload(&mut w, &mut hasher, &basis.weights)?;
    for p in &basis.pairs {
        write_payload(&mut w, &mut hasher, &[p.lambda])?;
        write_payload(&mut w, &mut hasher, &p.psi.values)?;
        write_payload(&mut w, &mut hasher, &p.trace)?;
    }
    w.write_u32::<LittleEndian>(hasher.finalize())?;
    w.flush()?;
    Ok(())
}

/// Reads a basis cache back; the second value is the stored speed checksum.
pub fn read_basis_cache(path: impl AsRef<Path>) -> Result<(SpectralBasis, u32)> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let dim = crate::fields::io::read_header_prefix(&mut r, BASIS_MAGIC, path)?;
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
        *o = r.read_f64::<LittleEndian>().map_err(|_| malformed(path, "truncated header"))?;
    }
    for s in spacing.iter_mut().take(dim) {
        *s = r.read_f64::<LittleEndian>().map_err(|_| malformed(path, "truncated header"))?;
        if !(s.is_finite() && *s > 0.0) {
            return Err(malformed(path, "non-positive spacing"));
        }
    }
    let grid = Grid { dim, counts, origin, spacing };
    let mut lo = [0.0f64; 2];
    let mut hi = [0.0f64; 2];
    for v in lo.iter_mut().take(dim) {
        *v = r.read_f64::<LittleEndian>().map_err(|_| malformed(path, "truncated header"))?;
    }
    for v in hi.iter_mut().take(dim) {
        *v = r.read_f64::<LittleEndian>().map_err(|_| malformed(path, "truncated header"))?;
    }
    let domain =
        DomainSpec::new(dim, lo, hi).map_err(|e| malformed(path, format!("bad domain: {e}")))?;
    let speed_crc = r
        .read_u32::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))?;
    let n_det = r
        .read_u32::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))? as usize;
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
    let surface = ObservationSurface { domain: domain.clone(), detectors };
    let k = r
        .read_u32::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))? as usize;
    if k == 0 {
        return Err(malformed(path, "empty basis"));
    }
    let resolvability = r
        .read_f64::<LittleEndian>()
        .map_err(|_| malformed(path, "truncated header"))?;
    let n = grid.n_points();
    let mut hasher = Hasher::new();
    let weights = read_payload(&mut r, &mut hasher, n, path)?;
    let mut pairs = Vec::with_capacity(k);
    for _ in 0..k {
        let lambda = read_payload(&mut r, &mut hasher, 1, path)?[0];
        let values = read_payload(&mut r, &mut hasher, n, path)?;
        let trace = read_payload(&mut r, &mut hasher, n_det, path)?;
        let psi = ScalarField::from_values(grid.clone(), values)?;
        pairs.push(EigenPair { lambda, psi, trace });
    }
    finish_checked(&mut r, hasher, path)?;
    Ok((
        SpectralBasis { domain, grid, surface, pairs, weights, resolvability },
        speed_crc,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_observation_surface, make_grid};

    fn unit_square_setup(n_cells: usize, per_side: usize) -> (DomainSpec, Grid, ObservationSurface) {
        let domain = DomainSpec::new(2, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let grid = make_grid(2, [0.0, 0.0], [1.0, 1.0], [n_cells + 1, n_cells + 1]).unwrap();
        let surface = build_observation_surface(&domain, per_side).unwrap();
        (domain, grid, surface)
    }

    #[test]
    fn interval_modes_match_the_closed_form() {
        let domain = DomainSpec::new(1, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let grid = make_grid(1, [0.0, 0.0], [1.0, 0.0], [101, 1]).unwrap();
        let surface = build_observation_surface(&domain, 1).unwrap();
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 5).unwrap();
        let pi = std::f64::consts::PI;
        let r2 = std::f64::consts::SQRT_2;
        for (i, pair) in basis.pairs.iter().enumerate() {
            let k = i + 1;
            assert!((pair.lambda - k as f64 * pi).abs() < 1e-12);
            // psi(x) = sqrt(2) sin(k pi x) at an interior node
            let x = grid.coordinate(0, 37);
            assert!((pair.psi.values[37] - r2 * (k as f64 * pi * x).sin()).abs() < 1e-12);
            // traces: -sqrt(2) k pi at 0 and sqrt(2) (-1)^k k pi at 1
            let slope = r2 * k as f64 * pi;
            assert!((pair.trace[0] + slope).abs() < 1e-12);
            let expect = slope * if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((pair.trace[1] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_square_spectrum_and_ordering() {
        let (domain, grid, surface) = unit_square_setup(64, 16);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 10).unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let expect_sq = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0, 13.0, 13.0, 17.0, 17.0];
        for (pair, s) in basis.pairs.iter().zip(expect_sq) {
            assert!((pair.lambda * pair.lambda - pi2 * s).abs() < 1e-9 * pi2 * s);
        }
        // Tie-break: (1,2) before (2,1) means the second mode is odd in y.
        let p = &basis.pairs[1].psi;
        let mid_hi = p.interp([0.25, 0.75]);
        let expect = 2.0 * (pi_f() * 0.25).sin() * (2.0 * pi_f() * 0.75).sin();
        assert!((mid_hi - expect).abs() < 1e-10);
    }

    fn pi_f() -> f64 {
        std::f64::consts::PI
    }

    #[test]
    fn sampled_modes_are_exactly_orthonormal() {
        let (domain, grid, surface) = unit_square_setup(40, 10);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 12).unwrap();
        let defect = basis.gram_defect();
        assert!(defect < 1e-12, "gram defect {defect}");
    }

    #[test]
    fn rectangle_normalization_and_eigenvalues() {
        let domain = DomainSpec::new(2, [0.0, -1.0], [1.0, 1.0]).unwrap();
        let grid = make_grid(2, [0.0, -1.0], [1.0, 1.0], [41, 81]).unwrap();
        let surface = build_observation_surface(&domain, 12).unwrap();
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 6).unwrap();
        let pi = pi_f();
        // lambda^2 = pi^2 (n^2 + m^2/4); lowest mode (1,1).
        assert!((basis.pairs[0].lambda - pi * (1.25f64).sqrt()).abs() < 1e-12);
        assert!(basis.gram_defect() < 1e-12);
    }

    #[test]
    fn boundary_flux_balances_the_volume_integral() {
        // Divergence theorem for an eigenfunction: the trace integrated
        // over the boundary equals -lambda^2 times its volume integral.
        // Both sides use second-order quadratures, so they agree to O(h^2).
        let (domain, grid, surface) = unit_square_setup(100, 100);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 4).unwrap();
        for pair in &basis.pairs {
            let flux: f64 = surface
                .detectors
                .iter()
                .zip(&pair.trace)
                .map(|(d, t)| d.weight * t)
                .sum();
            let volume: f64 = basis
                .weights
                .iter()
                .zip(&pair.psi.values)
                .map(|(w, v)| w * v)
                .sum();
            let rhs = -pair.lambda * pair.lambda * volume;
            let scale = pair.lambda * pair.lambda * volume.abs().max(1e-3);
            assert!(
                (flux - rhs).abs() <= 6e-3 * scale,
                "mode flux {flux} vs {rhs}"
            );
        }
    }

    #[test]
    fn numerical_trace_converges_to_the_analytic_one() {
        let run = |cells: usize| -> f64 {
            let (domain, grid, surface) = unit_square_setup(cells, 20);
            let basis = analytic_rectangle_basis(&domain, &grid, &surface, 3).unwrap();
            let mut worst = 0.0f64;
            for pair in &basis.pairs {
                let numeric = normal_derivative_trace(&pair.psi, &surface).unwrap();
                let scale = pair.trace.iter().fold(0.0f64, |m, t| m.max(t.abs()));
                for (n, a) in numeric.iter().zip(&pair.trace) {
                    worst = worst.max((n - a).abs() / scale);
                }
            }
            worst
        };
        let coarse = run(40);
        let fine = run(80);
        let ratio = coarse / fine;
        assert!(ratio > 3.0, "trace error ratio {ratio} ({coarse} -> {fine})");
        assert!(fine < 3e-3, "fine-grid trace error {fine}");
    }

    #[test]
    fn degenerate_clusters_group_equal_eigenvalues() {
        let (domain, grid, surface) = unit_square_setup(32, 8);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 10).unwrap();
        let clusters = basis.degenerate_clusters(DEGENERACY_REL_TOL);
        let sizes: Vec<usize> = clusters.iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![1, 2, 1, 2, 2, 2]);
    }

    #[test]
    fn unit_square_resolvable_count_at_h_hundredth() {
        let (domain, grid, _) = unit_square_setup(100, 4);
        assert_eq!(resolvable_mode_count(&domain, &grid, 1.0), 183);
    }

    #[test]
    fn projection_recovers_coefficients_of_a_synthesized_field() {
        let (domain, grid, surface) = unit_square_setup(48, 12);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 8).unwrap();
        let coeffs = [0.9, -0.4, 0.0, 0.25, 1.5, 0.0, -0.1, 0.05];
        let field = basis.synthesize(&coeffs).unwrap();
        let back = basis.project(&field.values);
        for (a, b) in back.iter().zip(coeffs) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn basis_cache_roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.tatb");
        let (domain, grid, surface) = unit_square_setup(24, 6);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 7).unwrap();
        write_basis_cache(&path, &basis, 0xDEAD_BEEF).unwrap();
        let (back, crc) = read_basis_cache(&path).unwrap();
        assert_eq!(crc, 0xDEAD_BEEF);
        assert_eq!(back.k(), basis.k());
        assert_eq!(back.grid, basis.grid);
        assert!(back.surface.compatible_with(&basis.surface));
        for (p, q) in back.pairs.iter().zip(&basis.pairs) {
            assert_eq!(p.lambda.to_bits(), q.lambda.to_bits());
            assert_eq!(p.psi.values, q.psi.values);
            assert_eq!(p.trace, q.trace);
        }
        assert_eq!(back.weights, basis.weights);
    }

    #[test]
    fn corrupted_basis_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.tatb");
        let (domain, grid, surface) = unit_square_setup(16, 4);
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 3).unwrap();
        write_basis_cache(&path, &basis, 7).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        std::fs::write(&path, &bytes).unwrap();
        match read_basis_cache(&path) {
            Err(Error::ChecksumMismatch { .. }) | Err(Error::MalformedFile { .. }) => {}
            other => panic!("expected corruption error, got {:?}", other.map(|_| ())),
        }
    }
}
