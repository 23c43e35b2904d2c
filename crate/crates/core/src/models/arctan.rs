//! `dX = (α arctan X + β)dt + σ dW` with the tangent-line auxiliary process.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::guided::{GuidedModel, Segment};
use crate::linproc::{Beta, LinearAuxiliary};
use crate::sde::DiffusionModel;

/// Parameters are `θ = (α, β, σ)`.
#[derive(Debug, Clone, Default)]
pub struct Arctan;

/// `(B̃, β̃)` of the linearisation at the mean-reversion level `tan(−β/α)`;
/// for `α = 0` the drift is the constant `β`.
pub fn linearisation(alpha: f64, beta: f64) -> (f64, f64) {
    if alpha == 0.0 {
        return (0.0, beta);
    }
    let c = -beta / alpha;
    (alpha * c.cos().powi(2), 0.5 * alpha * (2.0 * beta / alpha).sin())
}

impl DiffusionModel for Arctan {
    fn state_dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["alpha".into(), "beta".into(), "sigma".into()]
    }

    fn drift(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        DVector::from_element(1, theta[0] * x[0].atan() + theta[1])
    }

    fn dispersion(&self, _t: f64, _x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, theta[2])
    }
}

impl GuidedModel for Arctan {
    fn auxiliary(&self, theta: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
        let (b, beta) = linearisation(theta[0], theta[1]);
        LinearAuxiliary::new(
            DMatrix::from_element(1, 1, b),
            Beta::Constant(DVector::from_element(1, beta)),
            DMatrix::from_element(1, 1, theta[2]),
            seg.horizon(),
            seg.v.clone(),
        )
    }

    fn drift_basis(&self, _t: f64, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(1, 2, &[x[0].atan(), 1.0]))
    }

    fn basis_indices(&self) -> Vec<usize> {
        vec![0, 1]
    }
}
