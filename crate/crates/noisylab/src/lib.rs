//! Label-noise analysis toolkit.
//!
//! The crate is organised around a small set of exact, finite-support
//! primitives: probability vectors on the simplex ([`simplex`]), the simple
//! non-uniform label-noise model ([`noise`]), a loss zoo with brute-force and
//! analytic risk minimisers plus verdict engines ([`losses`]), exact and
//! binned calibration diagnostics ([`calibration`]), data synthesis and IDX
//! ingestion ([`datasets`]) and a from-scratch MLP training bench
//! ([`trainer`]). The [`cli`] module ties everything into batch commands.

pub mod calibration;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod losses;
pub mod noise;
pub mod rng;
pub mod simplex;
pub mod trainer;

pub use error::Error;
pub use simplex::{LabelId, ProbVector};
