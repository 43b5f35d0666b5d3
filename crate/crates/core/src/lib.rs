//! Spectral analysis of one-dimensional periodic Dirac systems with a
//! decaying off-diagonal perturbation.
//!
//! - [`potentials`]: periodic backgrounds, perturbation templates, systems
//! - [`integrate`]: transfer matrices and Prüfer-angle propagation
//! - [`floquet`]: discriminant, band edges, quasimomentum, Floquet solutions
//! - [`counting`]: eigenvalue counts by Prüfer shooting, truncated half-line counts
//! - [`asymptotics`]: the eigenvalue-density integral and convergence sweeps
//! - [`cli`]: JSON configs and CSV/JSON reports for the `dirac-gap` binary

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod counting;
pub mod error;
pub mod floquet;
pub mod integrate;
pub mod potentials;

pub use error::{Error, Result};
