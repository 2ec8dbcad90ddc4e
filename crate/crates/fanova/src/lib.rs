//! k-sample distributional comparison for discretized functional data.
//!
//! The central procedure is the spatial-sign (SS) test for equality of the
//! group distributions of Hilbert-space valued observations, with three
//! calibrations: asymptotic Gaussian simulation, bootstrap and permutation.
//! Six mean-based baseline tests, a family of process simulators and a
//! Monte-Carlo size/power harness are included, together with a CLI for
//! dataset ingestion and experiment runs.

pub mod baselines;
pub mod covariance;
pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod rng;
pub mod sample;
pub mod sign;
pub mod simulate;
pub mod space;

pub use error::{Error, Result};
pub use inference::TestReport;
pub use sample::GroupedSample;
pub use space::{GridDomain, GridFunction, HTuple};

/// Artifact version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
