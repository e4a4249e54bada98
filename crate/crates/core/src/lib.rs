//! Exact and effective dynamics of dissipative Rydberg lattice gases.
//!
//! The crate integrates the full Lindblad dynamics of two-level (strong
//! dephasing) and three-level (EIT) atoms on a chain, samples it with quantum
//! jumps, and implements the effective descriptions obtained by adiabatic
//! elimination: classical rate equations with kinetic constraints to second
//! and fourth order, their kinetic Monte Carlo sampling, and reduced `2^N`
//! master equations for the EIT gas. A brute-force projection-operator oracle
//! ([`nz`]) rebuilds every effective generator numerically for small systems.

pub mod basis;
pub mod eit;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod expint;
pub mod kmc;
pub mod model;
pub mod nz;
pub mod observables;
pub mod ode;
pub mod operators;
pub mod qjmc;
pub mod rates;
pub mod sparse;
pub mod state;
pub mod steady;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
