//! Interior stiffness operator for the Dirichlet eigenproblem.
//!
//! `DiscreteOperator` applies `L = (1/h^2)`-scaled 3/5-point graph Laplacian
//! on the interior nodes of the reconstruction domain, with zero Dirichlet
//! values on the domain edge. The eigensolver pairs it with the mass matrix
//! `M = diag(1/c^2)`: the generalized problem `L psi = lambda^2 M psi` is
//! the grid version of `-c^2 Lap psi = lambda^2 psi`, self-adjoint in
//! `L^2(B, dx/c^2)`.

use crate::error::{Error, Result};
use crate::fields::Grid;

pub struct DiscreteOperator {
    /// Interior node counts per axis.
    m: [usize; 2],
    dim: usize,
    inv_h2: [f64; 2],
}

impl DiscreteOperator {
    /// `grid` is the domain grid including its boundary nodes.
    pub fn new(grid: &Grid) -> Result<DiscreteOperator> {
        for a in 0..grid.dim {
            if grid.counts[a] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has no interior nodes (count {})",
                    grid.counts[a]
                )));
            }
        }
        let mut m = [1usize; 2];
        for a in 0..grid.dim {
            m[a] = grid.counts[a] - 2;
        }
        Ok(DiscreteOperator {
            m,
            dim: grid.dim,
            inv_h2: [
                1.0 / (grid.spacing[0] * grid.spacing[0]),
                1.0 / (grid.spacing[1] * grid.spacing[1]),
            ],
        })
    }

    pub fn n_interior(&self) -> usize {
        self.m[0] * self.m[1]
    }

    pub fn interior_counts(&self) -> [usize; 2] {
        self.m
    }

    /// `out = L u` over interior nodes (row-major, x fastest).
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let (mx, my) = (self.m[0], self.m[1]);
        debug_assert_eq!(u.len(), mx * my);
        debug_assert_eq!(out.len(), mx * my);
        let ax = self.inv_h2[0];
        let ay = self.inv_h2[1];
        let diag = if self.dim == 2 { 2.0 * (ax + ay) } else { 2.0 * ax };
        for iy in 0..my {
            let base = iy * mx;
            for ix in 0..mx {
                let i = base + ix;
                let mut v = diag * u[i];
                if ix > 0 {
                    v -= ax * u[i - 1];
                }
                if ix + 1 < mx {
                    v -= ax * u[i + 1];
                }
                if self.dim == 2 {
                    if iy > 0 {
                        v -= ay * u[i - mx];
                    }
                    if iy + 1 < my {
                        v -= ay * u[i + mx];
                    }
                }
                out[i] = v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_grid;
    use crate::poisson::RectPoisson;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn apply_is_the_inverse_of_the_fast_solve() {
        let g = make_grid(2, [0.0, 0.0], [1.0, 1.0], [21, 27]).unwrap();
        let op = DiscreteOperator::new(&g).unwrap();
        let pois = RectPoisson::new(&g).unwrap();
        let mut rng = StdRng::seed_from_u64(42);
        let u: Vec<f64> = (0..op.n_interior()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lu = vec![0.0; u.len()];
        op.apply(&u, &mut lu);
        let back = pois.solve(&lu);
        let err = back
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "max deviation {err}");
    }

    #[test]
    fn operator_is_symmetric() {
        let g = make_grid(2, [0.0, 0.0], [2.0, 1.0], [19, 13]).unwrap();
        let op = DiscreteOperator::new(&g).unwrap();
        let n = op.n_interior();
        let mut rng = StdRng::seed_from_u64(5);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lu = vec![0.0; n];
        let mut lv = vec![0.0; n];
        op.apply(&u, &mut lu);
        op.apply(&v, &mut lv);
        let a: f64 = lu.iter().zip(&v).map(|(x, y)| x * y).sum();
        let b: f64 = u.iter().zip(&lv).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn constant_vector_sees_boundary_through_the_diagonal() {
        // With u = 1 everywhere, interior nodes away from the edge cancel
        // exactly; only nodes adjacent to the boundary keep a 1/h^2 excess.
        let g = make_grid(1, [0.0, 0.0], [1.0, 0.0], [11, 1]).unwrap();
        let op = DiscreteOperator::new(&g).unwrap();
        let u = vec![1.0; op.n_interior()];
        let mut lu = vec![0.0; u.len()];
        op.apply(&u, &mut lu);
        let inv_h2 = 100.0;
        assert!((lu[0] - inv_h2).abs() < 1e-9);
        assert!((lu[8] - inv_h2).abs() < 1e-9);
        for &v in &lu[1..8] {
            assert!(v.abs() < 1e-9);
        }
    }
}
