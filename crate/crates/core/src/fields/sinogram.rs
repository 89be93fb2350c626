//! Boundary pressure traces: detector x time sample matrices.

use crate::error::{Error, Result};
use crate::fields::ObservationSurface;

/// Pressure samples `g(y_i, t_j)` on an observation surface, uniform in
/// time starting at `t = 0`. Stored detector-major: row `i` holds the full
/// time series of detector `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub surface: ObservationSurface,
    pub dt: f64,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(surface: ObservationSurface, dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidSpec(format!("sinogram dt must be positive, got {dt}")));
        }
        if steps < 3 {
            return Err(Error::InvalidSpec(format!(
                "sinogram needs at least 3 time samples, got {steps}"
            )));
        }
        let n = surface.len() * steps;
        Ok(Sinogram { surface, dt, steps, values: vec![0.0; n] })
    }

    pub fn from_values(
        surface: ObservationSurface,
        dt: f64,
        steps: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != surface.len() * steps {
            return Err(Error::Mismatch(format!(
                "sinogram payload {} vs {} detectors x {} steps",
                values.len(),
                surface.len(),
                steps
            )));
        }
        let mut s = Sinogram::zeros(surface, dt, steps)?;
        s.values = values;
        Ok(s)
    }

    pub fn n_detectors(&self) -> usize {
        self.surface.len()
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.steps - 1) as f64 * self.dt
    }

    pub fn value(&self, detector: usize, step: usize) -> f64 {
        self.values[detector * self.steps + step]
    }

    pub fn row(&self, detector: usize) -> &[f64] {
        &self.values[detector * self.steps..(detector + 1) * self.steps]
    }

    pub fn row_mut(&mut self, detector: usize) -> &mut [f64] {
        &mut self.values[detector * self.steps..(detector + 1) * self.steps]
    }

    /// Column `j` as a fresh vector (one value per detector).
    pub fn slice_at(&self, step: usize) -> Vec<f64> {
        (0..self.n_detectors()).map(|i| self.value(i, step)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
