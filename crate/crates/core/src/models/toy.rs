//! Scaled Brownian motion `X = τ^{-1/2} W` with precision parameter `τ`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::guided::{GuidedModel, Segment};
use crate::linproc::{Beta, LinearAuxiliary};
use crate::sde::DiffusionModel;

#[derive(Debug, Clone)]
pub struct ScaledBrownian {
    dim: usize,
}

impl ScaledBrownian {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl DiffusionModel for ScaledBrownian {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn param_names(&self) -> Vec<String> {
        vec!["tau".into()]
    }

    fn drift(&self, _t: f64, _x: &DVector<f64>, _theta: &[f64]) -> DVector<f64> {
        DVector::zeros(self.dim)
    }

    fn dispersion(&self, _t: f64, _x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) / theta[0].sqrt()
    }
}

impl GuidedModel for ScaledBrownian {
    fn auxiliary(&self, theta: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
        LinearAuxiliary::new(
            DMatrix::zeros(self.dim, self.dim),
            Beta::Constant(DVector::zeros(self.dim)),
            DMatrix::identity(self.dim, self.dim) / theta[0].sqrt(),
            seg.horizon(),
            seg.v.clone(),
        )
    }
}

/// `(shape, rate)` of the posterior of `τ` under an `Exp(1)` prior given one
/// scalar observation `x1` at time 1 of a path started at 0.
pub fn exact_posterior(x1: f64) -> (f64, f64) {
    (1.5, 1.0 + 0.5 * x1 * x1)
}
