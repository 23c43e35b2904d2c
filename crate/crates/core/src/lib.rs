//! Bayesian estimation of discretely observed diffusions by data
//! augmentation with guided bridge proposals.
//!
//! The sampler works on the innovations `Z` driving each bridge rather than on
//! the bridges themselves, so parameters in the diffusion coefficient can be
//! updated without the chain freezing. Bridges are simulated in a time-changed
//! and scaled form that removes the singular pull towards the end point.

pub mod discretization;
pub mod error;
pub mod exec;
pub mod guided;
pub mod linalg;
pub mod linproc;
pub mod mcmc;
pub mod models;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
