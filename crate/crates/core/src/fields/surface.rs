//! Observation surfaces: detector samplings of the domain boundary.

use crate::error::{Error, Result};
use crate::fields::DomainSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub position: [f64; 2],
    /// Outward unit normal of `B` at the detector.
    pub normal: [f64; 2],
    /// Midpoint-rule quadrature weight (side length / detectors per side).
    pub weight: f64,
    /// Distance along the boundary, counterclockwise from the lower corner.
    pub arclength: f64,
}

/// Midpoint-rule sampling of the boundary of `B`.
///
/// In 2-D the detectors traverse the four sides counterclockwise (bottom,
/// right, top, left), `n_per_side` midpoints each. In 1-D the two endpoints
/// act as detectors with unit weight, so weights always sum to the boundary
/// measure of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSurface {
    pub domain: DomainSpec,
    pub detectors: Vec<Detector>,
}

pub fn build_observation_surface(
    domain: &DomainSpec,
    n_per_side: usize,
) -> Result<ObservationSurface> {
    if domain.dim == 1 {
        let detectors = vec![
            Detector {
                position: [domain.lo[0], 0.0],
                normal: [-1.0, 0.0],
                weight: 1.0,
                arclength: 0.0,
            },
            Detector {
                position: [domain.hi[0], 0.0],
                normal: [1.0, 0.0],
                weight: 1.0,
                arclength: 1.0,
            },
        ];
        return Ok(ObservationSurface { domain: domain.clone(), detectors });
    }
    if n_per_side == 0 {
        return Err(Error::InvalidSpec("n_per_side must be at least 1".into()));
    }
    let (a, b) = (domain.side(0), domain.side(1));
    let [x0, y0] = [domain.lo[0], domain.lo[1]];
    let [x1, y1] = [domain.hi[0], domain.hi[1]];
    let mut detectors = Vec::with_capacity(4 * n_per_side);
    // (start point, direction, length, outward normal), counterclockwise.
    let sides: [([f64; 2], [f64; 2], f64, [f64; 2]); 4] = [
        ([x0, y0], [1.0, 0.0], a, [0.0, -1.0]),
        ([x1, y0], [0.0, 1.0], b, [1.0, 0.0]),
        ([x1, y1], [-1.0, 0.0], a, [0.0, 1.0]),
        ([x0, y1], [0.0, -1.0], b, [-1.0, 0.0]),
    ];
    let mut offset = 0.0;
    for (start, dir, len, normal) in sides {
        let w = len / n_per_side as f64;
        for j in 0..n_per_side {
            let s = (j as f64 + 0.5) * w;
            detectors.push(Detector {
                position: [start[0] + dir[0] * s, start[1] + dir[1] * s],
                normal,
                weight: w,
                arclength: offset + s,
            });
        }
        offset += len;
    }
    Ok(ObservationSurface { domain: domain.clone(), detectors })
}

impl ObservationSurface {
    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.detectors.iter().map(|d| d.weight).sum()
    }

    /// True when the two surfaces describe the same detectors to tight
    /// tolerance (used to guard sinogram/basis pairings).
    pub fn compatible_with(&self, other: &ObservationSurface) -> bool {
        self.domain.dim == other.domain.dim
            && self.len() == other.len()
            && self
                .detectors
                .iter()
                .zip(&other.detectors)
                .all(|(p, q)| {
                    (0..self.domain.dim).all(|a| {
                        (p.position[a] - q.position[a]).abs() <= 1e-9
                            && (p.normal[a] - q.normal[a]).abs() <= 1e-12
                    }) && (p.weight - q.weight).abs() <= 1e-12 * (1.0 + p.weight.abs())
                })
    }
}
