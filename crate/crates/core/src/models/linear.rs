//! Linear SDE `dX = (BX + β)dt + σ dW`, guided by itself.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::guided::{GuidedModel, Segment};
use crate::linproc::{Beta, LinearAuxiliary};
use crate::sde::DiffusionModel;

/// `θ = (vec B, β, vec σ)` with column-major `vec`.
#[derive(Debug, Clone)]
pub struct LinearSde {
    d: usize,
    noise: usize,
}

impl LinearSde {
    pub fn new(d: usize, noise: usize) -> Self {
        Self { d, noise }
    }

    pub fn param_len(&self) -> usize {
        self.d * self.d + self.d + self.d * self.noise
    }

    /// Split `θ` into `(B, β, σ)`.
    pub fn unpack(&self, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        let d = self.d;
        let b = DMatrix::from_column_slice(d, d, &theta[..d * d]);
        let beta = DVector::from_column_slice(&theta[d * d..d * d + d]);
        let sigma = DMatrix::from_column_slice(d, self.noise, &theta[d * d + d..]);
        (b, beta, sigma)
    }
}

impl DiffusionModel for LinearSde {
    fn state_dim(&self) -> usize {
        self.d
    }

    fn noise_dim(&self) -> usize {
        self.noise
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.param_len()).map(|i| format!("theta{}", i + 1)).collect()
    }

    fn drift(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        let (b, beta, _) = self.unpack(theta);
        b * x + beta
    }

    fn dispersion(&self, _t: f64, _x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        self.unpack(theta).2
    }
}

impl GuidedModel for LinearSde {
    fn auxiliary(&self, theta: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
        let (b, beta, sigma) = self.unpack(theta);
        LinearAuxiliary::new(b, Beta::Constant(beta), sigma, seg.horizon(), seg.v.clone())
    }
}
