//! Federated power iterations for distributed truncated SVD with
//! differential privacy, plus the baselines and dataset plumbing needed to
//! run reproducible experiments.

pub mod baselines;
pub mod data;
pub mod engine;
mod error;
pub mod experiment;
pub mod linalg;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
