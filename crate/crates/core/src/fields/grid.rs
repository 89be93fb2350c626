//! Uniform tensor grids, axis-aligned domains, and scalar fields on them.

use crate::error::{Error, Result};

/// Uniform 1-D or 2-D tensor grid with inclusive endpoints.
///
/// Coordinates are always derived as `origin + index * spacing` — a single
/// multiply, never an accumulated sum — so `coordinate` is reproducible and
/// free of drift. For 1-D grids the second axis is a singleton
/// (`counts[1] == 1`) and is ignored by all axis loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub counts: [usize; 2],
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
}

/// Build a grid over the box `[lo, hi]` with `counts` points per axis
/// (inclusive endpoints), so `spacing = (hi - lo) / (counts - 1)`.
pub fn make_grid(dim: usize, lo: [f64; 2], hi: [f64; 2], counts: [usize; 2]) -> Result<Grid> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
    }
    let mut c = [1usize; 2];
    let mut origin = [0.0; 2];
    let mut spacing = [1.0; 2];
    for a in 0..dim {
        if counts[a] < 3 {
            return Err(Error::InvalidGrid(format!(
                "axis {a} needs at least 3 points, got {}",
                counts[a]
            )));
        }
        if !lo[a].is_finite() || !hi[a].is_finite() || hi[a] <= lo[a] {
            return Err(Error::InvalidGrid(format!(
                "axis {a} extent [{}, {}] is not a finite increasing interval",
                lo[a], hi[a]
            )));
        }
        c[a] = counts[a];
        origin[a] = lo[a];
        spacing[a] = (hi[a] - lo[a]) / (counts[a] - 1) as f64;
    }
    Ok(Grid { dim, counts: c, origin, spacing })
}

impl Grid {
    pub fn n_points(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    /// Coordinate of node `i` along `axis`: `origin + i * spacing`, exact.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.coordinate(0, ix), if self.dim == 2 { self.coordinate(1, iy) } else { 0.0 }]
    }

    /// Row-major flat index: x fastest.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.counts[0] + ix
    }

    pub fn h_min(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).fold(0.0, f64::max)
    }

    pub fn extent_hi(&self, axis: usize) -> f64 {
        self.coordinate(axis, self.counts[axis] - 1)
    }

    /// Index of the grid node at coordinate `x` on `axis`, if `x` lies on a
    /// node within `1e-9 * spacing`.
    pub fn node_index_of(&self, axis: usize, x: f64) -> Option<usize> {
        let t = (x - self.origin[axis]) / self.spacing[axis];
        let i = t.round();
        if i < 0.0 || i as usize >= self.counts[axis] {
            return None;
        }
        if (t - i).abs() <= 1e-9 {
            Some(i as usize)
        } else {
            None
        }
    }

    /// True when `x` lies inside the grid box (inclusive).
    pub fn contains_point(&self, x: [f64; 2]) -> bool {
        (0..self.dim).all(|a| x[a] >= self.origin[a] - 1e-12 && x[a] <= self.extent_hi(a) + 1e-12)
    }
}

/// Axis-aligned observation rectangle `B` (an interval in 1-D).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl DomainSpec {
    pub fn new(dim: usize, lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidDomain(format!("dimension must be 1 or 2, got {dim}")));
        }
        for a in 0..dim {
            if !lo[a].is_finite() || !hi[a].is_finite() || hi[a] <= lo[a] {
                return Err(Error::InvalidDomain(format!(
                    "axis {a} corners [{}, {}] are not a finite increasing interval",
                    lo[a], hi[a]
                )));
            }
        }
        let (mut l, mut h) = ([0.0; 2], [0.0; 2]);
        l[..dim].copy_from_slice(&lo[..dim]);
        h[..dim].copy_from_slice(&hi[..dim]);
        Ok(DomainSpec { dim, lo: l, hi: h })
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim).map(|a| self.side(a).powi(2)).sum::<f64>().sqrt()
    }

    /// Boundary measure: perimeter in 2-D, counting measure (= 2) in 1-D.
    pub fn boundary_measure(&self) -> f64 {
        match self.dim {
            1 => 2.0,
            _ => 2.0 * (self.side(0) + self.side(1)),
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }

    /// Corner node indices of `B` on `grid`. Errors unless every corner of
    /// `B` sits on a grid node (required wherever a field on `B` is carved
    /// out of a larger simulation grid).
    pub fn aligned_indices(&self, grid: &Grid) -> Result<([usize; 2], [usize; 2])> {
        if self.dim != grid.dim {
            return Err(Error::Mismatch(format!(
                "domain dimension {} vs grid dimension {}",
                self.dim, grid.dim
            )));
        }
        let mut lo_idx = [0usize; 2];
        let mut hi_idx = [0usize; 2];
        for a in 0..self.dim {
            lo_idx[a] = grid.node_index_of(a, self.lo[a]).ok_or_else(|| {
                Error::Mismatch(format!("domain corner {} not on a grid node (axis {a})", self.lo[a]))
            })?;
            hi_idx[a] = grid.node_index_of(a, self.hi[a]).ok_or_else(|| {
                Error::Mismatch(format!("domain corner {} not on a grid node (axis {a})", self.hi[a]))
            })?;
            if hi_idx[a] <= lo_idx[a] + 1 {
                return Err(Error::Mismatch(format!("domain spans too few grid cells on axis {a}")));
            }
        }
        Ok((lo_idx, hi_idx))
    }

    /// The restriction of `grid` to `B` as a grid of its own, together with
    /// the index offset of `B`'s lower corner in `grid`.
    pub fn subgrid(&self, grid: &Grid) -> Result<(Grid, [usize; 2])> {
        let (lo_idx, hi_idx) = self.aligned_indices(grid)?;
        let mut counts = [1usize; 2];
        let mut origin = [0.0; 2];
        let mut spacing = [1.0; 2];
        for a in 0..self.dim {
            counts[a] = hi_idx[a] - lo_idx[a] + 1;
            origin[a] = grid.coordinate(a, lo_idx[a]);
            spacing[a] = grid.spacing[a];
        }
        Ok((Grid { dim: self.dim, counts, origin, spacing }, lo_idx))
    }
}

/// Scalar samples on a [`Grid`], row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.n_points();
        ScalarField { grid, values: vec![0.0; n] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Mismatch(format!(
                "field length {} vs grid points {}",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Bilinear interpolation (linear in 1-D). `x` must lie inside the grid.
    pub fn interp(&self, x: [f64; 2]) -> f64 {
        let g = &self.grid;
        let locate = |axis: usize, v: f64| -> (usize, f64) {
            let t = (v - g.origin[axis]) / g.spacing[axis];
            let max_cell = g.counts[axis] - 2;
            let i = (t.floor() as isize).clamp(0, max_cell as isize) as usize;
            (i, (t - i as f64).clamp(0.0, 1.0))
        };
        let (ix, fx) = locate(0, x[0]);
        if g.dim == 1 {
            return self.values[ix] * (1.0 - fx) + self.values[ix + 1] * fx;
        }
        let (iy, fy) = locate(1, x[1]);
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Extract the restriction of this field to `B` (grids must align).
    pub fn restrict(&self, domain: &DomainSpec) -> Result<ScalarField> {
        let (sub, off) = domain.subgrid(&self.grid)?;
        let mut out = ScalarField::zeros(sub);
        let (nx, ny) = (out.grid.counts[0], out.grid.counts[1]);
        for iy in 0..ny {
            for ix in 0..nx {
                let v = self.at(off[0] + ix, if self.grid.dim == 2 { off[1] + iy } else { 0 });
                let idx = out.grid.index(ix, iy);
                out.values[idx] = v;
            }
        }
        Ok(out)
    }
}
