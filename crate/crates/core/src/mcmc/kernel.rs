//! Proposal kernels for parameter blocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Proposal `q(θ∘ | θ)` for a block of parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalKernel {
    /// `log θ∘ = log θ + u`, `u ~ U(−w, w)` per coordinate.
    LogRandomWalkUniform { halfwidth: f64 },
    /// `log θ∘ ~ N(log θ, scale²)` per coordinate.
    LogRandomWalkGaussian { scale: f64 },
    /// `θ∘ ~ N(θ, covariance)`.
    GaussianRW { covariance: DMatrix<f64> },
    /// `ϑ∘ ~ N(ϑ, α²W⁻¹)` with `W` from the imputed path; only meaningful in
    /// the preconditioned sampler. `None` picks `α = 2.38/√dim`.
    PreconditionedRW { alpha: Option<f64> },
    /// Independent `Gamma(shape, rate)` draws per coordinate.
    IndependenceGamma { shape: f64, rate: f64 },
}

impl ProposalKernel {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            ProposalKernel::LogRandomWalkUniform { halfwidth } => *halfwidth > 0.0 && halfwidth.is_finite(),
            ProposalKernel::LogRandomWalkGaussian { scale } => *scale > 0.0 && scale.is_finite(),
            ProposalKernel::GaussianRW { covariance } => {
                covariance.nrows() == dim && covariance.ncols() == dim && covariance.clone().cholesky().is_some()
            }
            ProposalKernel::PreconditionedRW { alpha } => alpha.is_none_or(|a| a > 0.0 && a.is_finite()),
            ProposalKernel::IndependenceGamma { shape, rate } => *shape > 0.0 && *rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid proposal kernel {self:?} for a block of size {dim}")))
        }
    }

    /// Draw `θ∘` given the current block.
    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match self {
            ProposalKernel::LogRandomWalkUniform { halfwidth } => Ok(current
                .iter()
                .map(|&x| x * rng.random_range(-*halfwidth..*halfwidth).exp())
                .collect()),
            ProposalKernel::LogRandomWalkGaussian { scale } => Ok(current
                .iter()
                .map(|&x| {
                    let z: f64 = rng.sample(StandardNormal);
                    x * (scale * z).exp()
                })
                .collect()),
            ProposalKernel::GaussianRW { covariance } => {
                let l = covariance
                    .clone()
                    .cholesky()
                    .ok_or(Error::Singular {
                        what: "proposal covariance",
                        time: None,
                    })?
                    .l();
                let z = DVector::from_iterator(current.len(), (0..current.len()).map(|_| rng.sample(StandardNormal)));
                let step = l * z;
                Ok(current.iter().zip(step.iter()).map(|(x, s)| x + s).collect())
            }
            ProposalKernel::PreconditionedRW { .. } => Err(Error::Unsupported(
                "the preconditioned kernel needs the path statistic W; use the preconditioned sampler".into(),
            )),
            ProposalKernel::IndependenceGamma { shape, rate } => {
                let g = Gamma::new(*shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
                Ok(current.iter().map(|_| g.sample(rng)).collect())
            }
        }
    }

    /// `log q(θ | θ∘) − log q(θ∘ | θ)`.
    pub fn log_ratio(&self, current: &[f64], proposed: &[f64]) -> f64 {
        match self {
            ProposalKernel::LogRandomWalkUniform { .. } | ProposalKernel::LogRandomWalkGaussian { .. } => current
                .iter()
                .zip(proposed)
                .map(|(&x, &y)| y.ln() - x.ln())
                .sum(),
            ProposalKernel::GaussianRW { .. } | ProposalKernel::PreconditionedRW { .. } => 0.0,
            ProposalKernel::IndependenceGamma { shape, rate } => {
                let lg = |x: f64| (shape - 1.0) * x.ln() - rate * x;
                current.iter().zip(proposed).map(|(&x, &y)| lg(x) - lg(y)).sum()
            }
        }
    }
}

/// `log q(ϑ | ϑ∘) − log q(ϑ∘ | ϑ)` for `q(·|ϑ) = N(ϑ, α²W_ϑ⁻¹)` and
/// `q(·|ϑ∘) = N(ϑ∘, α²W_ϑ∘⁻¹)`, `δ = ϑ∘ − ϑ`, given `log|W|` of both.
pub fn preconditioned_log_ratio(
    delta: &DVector<f64>,
    w: &DMatrix<f64>,
    logdet_w: f64,
    w_new: &DMatrix<f64>,
    logdet_w_new: f64,
    alpha: f64,
) -> f64 {
    let quad = |m: &DMatrix<f64>| (delta.transpose() * m * delta)[(0, 0)] / (2.0 * alpha * alpha);
    (0.5 * logdet_w_new - quad(w_new)) - (0.5 * logdet_w - quad(w))
}

/// `α = 2.38/√dim`.
pub fn default_alpha(dim: usize) -> f64 {
    2.38 / (dim as f64).sqrt()
}
