//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by model construction, solvers and samplers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("site {site} out of range for a lattice of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("pair quantity requested for identical sites k = m = {0}")]
    SameSite(usize),

    #[error("{what}: N = {n_sites} exceeds the supported maximum {max}")]
    DimensionGuard {
        what: &'static str,
        n_sites: usize,
        max: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step size underflow at t = {t}: smallest step {step:e}")]
    Stiffness { t: f64, step: f64 },

    #[error("degenerate steady state: null space has dimension {multiplicity}")]
    DegenerateSteadyState { multiplicity: usize },

    #[error("observable `{observable}` is incompatible with {state}")]
    IncompatibleObservable {
        observable: String,
        state: &'static str,
    },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("norm underflow in trajectory at t = {t}")]
    NormUnderflow { t: f64 },

    #[error("initial state has weight {weight:e} on forbidden configurations")]
    InvalidInitialState { weight: f64 },

    #[error("negative rate {rate:e} at site {site}")]
    NegativeRate { site: usize, rate: f64 },

    #[error("linear solve failed: {0}")]
    SolverFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
