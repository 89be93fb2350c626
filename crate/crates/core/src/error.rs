//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("sound speed must stay positive: min c = {min:.6e}")]
    NonPositiveSpeed { min: f64 },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error(
        "CFL violation: dt = {dt:.6e} exceeds {limit:.6e} \
         (cfl {cfl} * h_min {h_min:.6e} / c_max {c_max:.6e})"
    )]
    CflViolation {
        dt: f64,
        limit: f64,
        cfl: f64,
        h_min: f64,
        c_max: f64,
    },

    #[error("initial data support overlaps the sponge layer")]
    SupportInSponge,

    #[error("non-finite field value detected at step {step}")]
    NonFinite { step: usize },

    #[error(
        "eigensolver converged {converged}/{requested} modes at tol {tol:.3e} \
         (worst residual {residual:.3e})"
    )]
    NonConvergence {
        requested: usize,
        converged: usize,
        tol: f64,
        residual: f64,
    },

    #[error("zero initial ray momentum")]
    ZeroMomentum,

    #[error(
        "Hamiltonian drift {drift:.3e} still above {bound:.1e} after {halvings} step halvings"
    )]
    HamiltonianDrift {
        drift: f64,
        bound: f64,
        halvings: u32,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("checksum mismatch in {path}: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch {
        path: String,
        stored: u32,
        computed: u32,
    },

    #[error("refusing to write non-finite value: {0}")]
    NonFiniteWrite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
