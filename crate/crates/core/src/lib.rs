//! Regularizing iterative ensemble Kalman inversion (EKI) with
//! non-hierarchical, centered and non-centered hierarchical, level set and
//! channel parameterizations, plus the Darcy-flow and 1D source-inversion
//! model problems and an experiment harness.

pub mod eki;
pub mod error;
pub mod exec;
pub mod forward;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod param_maps;
pub mod priors;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Exec;
