//! Lotka–Volterra with multiplicative noise in log coordinates,
//! `dξ = (θ − e^η)dt + σdW¹`, `dη = (−θ + e^ξ)dt + σdW²`, guided by the
//! log-derivative of the noise-free trajectory from the segment start.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::guided::{GuidedModel, Segment};
use crate::linproc::{Beta, LinearAuxiliary};
use crate::sde::DiffusionModel;

/// Parameters are `θ = (θ, σ)`.
#[derive(Debug, Clone, Default)]
pub struct LotkaVolterra;

/// `xy e^{−(x+y)/θ}`, constant along noise-free trajectories.
pub fn conserved(x: f64, y: f64, theta: f64) -> f64 {
    x * y * (-(x + y) / theta).exp()
}

fn field(theta: f64, p: [f64; 2]) -> [f64; 2] {
    [p[0] * (theta - p[1]), p[1] * (-theta + p[0])]
}

/// Noise-free trajectory on `[0, T]` from RK4 with a fixed step, evaluated
/// between nodes by cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    theta: f64,
    step: f64,
    nodes: Vec<[f64; 2]>,
    slopes: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn integrate(theta: f64, start: [f64; 2], t_end: f64, steps: usize) -> Result<Self> {
        let h = t_end / steps as f64;
        let mut nodes = Vec::with_capacity(steps + 1);
        let mut slopes = Vec::with_capacity(steps + 1);
        let mut p = start;
        for k in 0..=steps {
            if !(p[0] > 0.0 && p[1] > 0.0) || !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::Domain(format!(
                    "noise-free Lotka-Volterra trajectory left the positive quadrant at t = {}",
                    k as f64 * h
                )));
            }
            nodes.push(p);
            slopes.push(field(theta, p));
            if k == steps {
                break;
            }
            let add = |p: [f64; 2], k: [f64; 2], c: f64| [p[0] + c * k[0], p[1] + c * k[1]];
            let k1 = field(theta, p);
            let k2 = field(theta, add(p, k1, h / 2.0));
            let k3 = field(theta, add(p, k2, h / 2.0));
            let k4 = field(theta, add(p, k3, h));
            p = [
                p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
        }
        Ok(Self {
            theta,
            step: h,
            nodes,
            slopes,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// `(X̄_t, Ȳ_t)`.
    pub fn at(&self, t: f64) -> [f64; 2] {
        let n = self.nodes.len() - 1;
        let k = ((t / self.step).floor().max(0.0) as usize).min(n.saturating_sub(1));
        let r = ((t - k as f64 * self.step) / self.step).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            2.0 * r.powi(3) - 3.0 * r * r + 1.0,
            r.powi(3) - 2.0 * r * r + r,
            -2.0 * r.powi(3) + 3.0 * r * r,
            r.powi(3) - r * r,
        );
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            *o = h00 * self.nodes[k][i]
                + h10 * self.step * self.slopes[k][i]
                + h01 * self.nodes[k + 1][i]
                + h11 * self.step * self.slopes[k + 1][i];
        }
        out
    }

    /// `(d/dt log X̄_t, d/dt log Ȳ_t) = (θ − Ȳ_t, −θ + X̄_t)`.
    pub fn log_derivative(&self, t: f64) -> [f64; 2] {
        let p = self.at(t);
        [self.theta - p[1], -self.theta + p[0]]
    }
}

/// RK4 steps per segment.
pub const ODE_STEPS: usize = 10_000;

impl DiffusionModel for LotkaVolterra {
    fn state_dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into(), "sigma".into()]
    }

    fn drift(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        DVector::from_vec(vec![theta[0] - x[1].exp(), -theta[0] + x[0].exp()])
    }

    fn dispersion(&self, _t: f64, _x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * theta[1]
    }
}

impl GuidedModel for LotkaVolterra {
    fn auxiliary(&self, theta: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
        let t_end = seg.horizon();
        let traj = Arc::new(Trajectory::integrate(
            theta[0],
            [seg.u[0].exp(), seg.u[1].exp()],
            t_end,
            ODE_STEPS,
        )?);
        let beta = Beta::TimeVarying(Arc::new(move |t: f64| DVector::from_row_slice(&traj.log_derivative(t))));
        LinearAuxiliary::new(
            DMatrix::zeros(2, 2),
            beta,
            DMatrix::identity(2, 2) * theta[1],
            t_end,
            seg.v.clone(),
        )
    }
}
