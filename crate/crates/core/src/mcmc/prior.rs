//! Independent per-parameter priors.

use crate::error::{Error, Result};

/// Prior law of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    /// `N(mean, variance)`.
    Gaussian { mean: f64, variance: f64 },
    /// `log θ ~ U[lo, hi]`.
    UniformOnLog { lo: f64, hi: f64 },
    /// Improper density `1/θ` on `θ > 0`.
    FlatOnLog,
    /// `Exp(rate)` on `θ > 0`.
    Exponential { rate: f64 },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorSpec::Gaussian { mean, variance } => mean.is_finite() && variance > 0.0 && variance.is_finite(),
            PriorSpec::UniformOnLog { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            PriorSpec::FlatOnLog => true,
            PriorSpec::Exponential { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid prior {self:?}")))
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            PriorSpec::Gaussian { .. } => x.is_finite(),
            PriorSpec::UniformOnLog { lo, hi } => x > 0.0 && (lo..=hi).contains(&x.ln()),
            PriorSpec::FlatOnLog | PriorSpec::Exponential { .. } => x > 0.0 && x.is_finite(),
        }
    }

    /// Log density up to a constant shared by all `x`; `−∞` off the support.
    pub fn log_density(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PriorSpec::Gaussian { mean, variance } => {
                -0.5 * (x - mean).powi(2) / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            }
            PriorSpec::UniformOnLog { lo, hi } => -(hi - lo).ln() - x.ln(),
            PriorSpec::FlatOnLog => -x.ln(),
            PriorSpec::Exponential { rate } => rate.ln() - rate * x,
        }
    }

    /// Prior precision `1/ξ²` entering `W`; zero for non-Gaussian laws.
    pub fn precision(&self) -> f64 {
        match *self {
            PriorSpec::Gaussian { variance, .. } => 1.0 / variance,
            _ => 0.0,
        }
    }

    pub fn gaussian_mean(&self) -> Option<f64> {
        match *self {
            PriorSpec::Gaussian { mean, .. } => Some(mean),
            _ => None,
        }
    }
}

/// `Σ_i log π_i(θ_i)`.
pub fn log_prior(priors: &[PriorSpec], theta: &[f64]) -> f64 {
    priors.iter().zip(theta).map(|(p, &x)| p.log_density(x)).sum()
}

pub fn in_support(priors: &[PriorSpec], theta: &[f64]) -> bool {
    priors.iter().zip(theta).all(|(p, &x)| p.in_support(x))
}
