//! Phantom sources and heterogeneous sound-speed maps built from bump
//! primitives.

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::par;

/// Gaussians are truncated at this many widths so every primitive has
/// bounded support; the discarded value is `exp(-7.5^2/2) ≈ 6e-13`, below
/// every tolerance in the crate.
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 7.5;

/// A single radially symmetric bump.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `amp * exp(-r^2 / (2 width^2))`, truncated at
    /// [`GAUSSIAN_SUPPORT_SIGMAS`] widths.
    Gaussian { center: [f64; 2], width: f64, amp: f64 },
    /// Compactly supported C^inf bump `amp * exp(1 - 1/(1 - (r/radius)^2))`
    /// for `r < radius`, zero outside. The normalization makes the center
    /// value exactly `amp`.
    SmoothBump { center: [f64; 2], radius: f64, amp: f64 },
    /// Characteristic function of the closed disk: `amp` for `r <= radius`.
    Disk { center: [f64; 2], radius: f64, amp: f64 },
}

impl Primitive {
    pub fn center(&self) -> [f64; 2] {
        match *self {
            Primitive::Gaussian { center, .. }
            | Primitive::SmoothBump { center, .. }
            | Primitive::Disk { center, .. } => center,
        }
    }

    pub fn amp(&self) -> f64 {
        match *self {
            Primitive::Gaussian { amp, .. }
            | Primitive::SmoothBump { amp, .. }
            | Primitive::Disk { amp, .. } => amp,
        }
    }

    /// Radius outside which the primitive is exactly zero.
    pub fn support_radius(&self) -> f64 {
        match *self {
            Primitive::Gaussian { width, .. } => GAUSSIAN_SUPPORT_SIGMAS * width,
            Primitive::SmoothBump { radius, .. } | Primitive::Disk { radius, .. } => radius,
        }
    }

    pub fn eval(&self, x: [f64; 2], dim: usize) -> f64 {
        let c = self.center();
        let mut r2 = 0.0;
        for a in 0..dim {
            let d = x[a] - c[a];
            r2 += d * d;
        }
        match *self {
            Primitive::Gaussian { width, amp, .. } => {
                let s2 = r2 / (width * width);
                if s2 >= GAUSSIAN_SUPPORT_SIGMAS * GAUSSIAN_SUPPORT_SIGMAS {
                    0.0
                } else {
                    amp * (-0.5 * s2).exp()
                }
            }
            Primitive::SmoothBump { radius, amp, .. } => {
                let s2 = r2 / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    amp * (1.0 - 1.0 / (1.0 - s2)).exp()
                }
            }
            Primitive::Disk { radius, amp, .. } => {
                if r2 <= radius * radius {
                    amp
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        let c = self.center();
        for a in 0..dim {
            if !c[a].is_finite() {
                return Err(Error::InvalidSpec("non-finite primitive center".into()));
            }
        }
        if !self.amp().is_finite() {
            return Err(Error::InvalidSpec("non-finite primitive amplitude".into()));
        }
        let scale = match *self {
            Primitive::Gaussian { width, .. } => width,
            Primitive::SmoothBump { radius, .. } | Primitive::Disk { radius, .. } => radius,
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidSpec(format!("primitive scale must be positive, got {scale}")));
        }
        Ok(())
    }
}

/// A source phantom: a finite sum of primitives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhantomSpec {
    pub primitives: Vec<Primitive>,
}

impl PhantomSpec {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        PhantomSpec { primitives }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for p in &self.primitives {
            p.validate(dim)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: [f64; 2], dim: usize) -> f64 {
        self.primitives.iter().map(|p| p.eval(x, dim)).sum()
    }

    /// Radius of the origin-centered ball containing every primitive's
    /// support (zero for an empty phantom).
    pub fn support_ball_radius(&self, dim: usize) -> f64 {
        self.primitives
            .iter()
            .map(|p| {
                let c = p.center();
                let norm = (0..dim).map(|a| c[a] * c[a]).sum::<f64>().sqrt();
                norm + p.support_radius()
            })
            .fold(0.0, f64::max)
    }
}

/// Sample a phantom on a grid. Exactly zero outside the union of supports.
pub fn sample_phantom(spec: &PhantomSpec, grid: &Grid) -> Result<ScalarField> {
    spec.validate(grid.dim)?;
    let mut field = ScalarField::zeros(grid.clone());
    let g = grid.clone();
    let spec = spec.clone();
    par::for_each_row_mut(&mut field.values, grid.counts[0], move |iy, row| {
        for (ix, v) in row.iter_mut().enumerate() {
            *v = spec.eval(g.node(ix, iy), g.dim);
        }
    });
    Ok(field)
}

/// Sound speed `c(x) = 1 + bumps`, sampled on a grid, with cached extrema
/// and the homogenization radius.
#[derive(Debug, Clone)]
pub struct SoundSpeedField {
    pub field: ScalarField,
    pub c_min: f64,
    pub c_max: f64,
    /// `c ≡ 1` outside the origin-centered ball of this radius.
    pub homog_radius: f64,
}

impl SoundSpeedField {
    /// Homogeneous `c ≡ 1`.
    pub fn constant(grid: &Grid) -> Self {
        let field = ScalarField::from_values(grid.clone(), vec![1.0; grid.n_points()]).unwrap();
        SoundSpeedField { field, c_min: 1.0, c_max: 1.0, homog_radius: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn is_homogeneous(&self) -> bool {
        self.c_min == 1.0 && self.c_max == 1.0
    }
}

/// Sample `c = 1 + sum(bumps)`; rejects specs that drive `c` to zero or
/// below anywhere on the grid.
pub fn sample_sound_speed(spec: &PhantomSpec, grid: &Grid) -> Result<SoundSpeedField> {
    spec.validate(grid.dim)?;
    let bumps = sample_phantom(spec, grid)?;
    let values: Vec<f64> = bumps.values.iter().map(|v| 1.0 + v).collect();
    let c_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if c_min <= 0.0 {
        return Err(Error::NonPositiveSpeed { min: c_min });
    }
    let field = ScalarField::from_values(grid.clone(), values)?;
    Ok(SoundSpeedField { field, c_min, c_max, homog_radius: spec.support_ball_radius(grid.dim) })
}
