//! Forward acoustic simulation and eigenfunction-series inversion for
//! thermoacoustic/photoacoustic tomography on axis-aligned rectangles.
//!
//! The toolkit recovers an initial acoustic source `f` from the pressure
//! trace `g` recorded on the boundary of an observation rectangle `B`:
//!
//! * [`fields`] — grids, phantoms, heterogeneous sound-speed maps,
//!   observation surfaces, sinograms, and their on-disk formats,
//! * [`wave_sim`] — damped leapfrog FDTD forward solver with a sponge layer,
//! * [`rays`] — Hamiltonian ray tracing and the non-trapping check,
//! * [`spectral`] — Dirichlet eigenpairs of `-c^2 Δ` on `B` in the
//!   `c^-2`-weighted space (closed-form and numerical), normal-derivative
//!   traces, and the sine propagator,
//! * [`elliptic`] — discrete harmonic extension of boundary data,
//! * [`reconstruct`] — the eigenfunction-series inversion routes and the
//!   operator/kernel forms, with error metrics and diagnostics.
//!
//! With the default `parallel` feature the hot kernels fan out over rayon;
//! disabling it yields a dependency-free sequential build. Both paths are
//! bit-identical: all reductions run over a fixed chunking in index order.

pub mod elliptic;
pub mod error;
pub mod fields;
pub mod par;
pub mod poisson;
pub mod rays;
pub mod reconstruct;
pub mod spectral;
pub mod wave_sim;

pub use error::{Error, Result};
pub use fields::{
    build_observation_surface, make_grid, sample_phantom, sample_sound_speed, DomainSpec, Grid,
    ObservationSurface, PhantomSpec, Primitive, ScalarField, Sinogram, SoundSpeedField,
};
