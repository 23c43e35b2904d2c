//! One-step covariance errors of Euler discretisations of a Brownian bridge:
//! plain Euler on `X` versus Euler on the time-changed, scaled `U`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::guided::{tau, GuidedBridge, Segment};
use crate::models::toy::ScaledBrownian;
use crate::rng::{purpose, Substreams};

/// `(d(s), d'(s))`: deviation of the Euler one-step covariance from the exact
/// one, plain and time-changed, at step size `h` from `s` (with `‖a‖ = a_norm`).
pub fn discretization_errors(t_end: f64, h: f64, s: f64, a_norm: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) || s < 0.0 || s > t_end - h + 1e-12 * t_end {
        return Err(Error::Domain(format!(
            "need 0 <= s <= T - h, got s = {s}, h = {h}, T = {t_end}"
        )));
    }
    let gap = t_end - s;
    let d = h * h / gap * a_norm;
    let dp = h * h / t_end * (1.0 - h / gap).powi(2) * a_norm;
    Ok((d, dp))
}

/// `R_m(i) = (m − i)² / (m(m − i + 1))`, the ratio `d'/d` at step `i` of `m`.
pub fn ratio(m: usize, i: usize) -> f64 {
    let (m, i) = (m as f64, i as f64);
    (m - i).powi(2) / (m * (m - i + 1.0))
}

/// `R_m(i)` for `i = 1..=m`.
pub fn ratio_table(m: usize) -> Vec<f64> {
    (1..=m).map(|i| ratio(m, i)).collect()
}

/// Exact one-step conditional variances `(C_true, C'_true)` for a unit
/// Brownian bridge to `T`.
pub fn exact_covariances(t_end: f64, h: f64, s: f64) -> (f64, f64) {
    let gap = t_end - s;
    let c = h * (gap - h) / gap;
    let cp = 2.0 * h / t_end * (gap - h).powi(2) / gap - h * h / t_end * (gap - h).powi(2) / (gap * gap);
    (c, cp)
}

/// One row of the Monte Carlo study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub m: usize,
    pub i: usize,
    pub s: f64,
    pub d: f64,
    pub d_prime: f64,
    pub ratio: f64,
    /// Sample variance minus `C_true`, plain Euler.
    pub mc_d: f64,
    pub mc_d_se: f64,
    /// Sample variance minus `C'_true`, time-changed Euler.
    pub mc_d_prime: f64,
    pub mc_d_prime_se: f64,
}

const BLOCKS: usize = 64;

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Compare measured one-step covariance errors with `d` and `d'` for every
/// step `i = 1..=m` of a unit Brownian bridge from 0 to 0 on `[0, T]`.
///
/// Each step starts from the bridge mean (`X = 0`, `U = 0`); the one-step
/// variance does not depend on the starting state.
pub fn study(t_end: f64, m: usize, replicates: usize, seed: u64, exec: Execution) -> Result<Vec<StudyRow>> {
    if m < 1 || replicates < 2 {
        return Err(Error::Parameter("need m >= 1 and at least 2 replicates".into()));
    }
    let model = Arc::new(ScaledBrownian::new(1));
    let seg = Segment {
        index: 0,
        t0: 0.0,
        t1: t_end,
        u: DVector::zeros(1),
        v: DVector::zeros(1),
    };
    let bridge = GuidedBridge::build(model, &[1.0], &seg, m + 1)?;
    let aux = bridge.ctx().aux().clone();
    let h = t_end / m as f64;
    let subs = Substreams::new(seed);
    let mut rows = Vec::with_capacity(m);
    for i in 1..=m {
        let s = (i - 1) as f64 * h;
        let (d, d_prime) = discretization_errors(t_end, h, s, 1.0)?;
        let (c_true, cp_true) = exact_covariances(t_end, h, s);
        let x = aux.v_at(s);
        let drift_x = bridge.guided_drift(s, &x)?[0];
        let u = DVector::zeros(1);
        let (drift_u, scale_u) = bridge.u_sde_coefficients(s, &u)?;
        let (drift_u, scale_u) = (drift_u[0], scale_u[(0, 0)]);
        let gap_next = t_end - s - h;
        let v_next = aux.v_at(tau(s + h, t_end).min(t_end))[0];
        let per_block = replicates.div_ceil(BLOCKS);
        let draws: Vec<(Vec<f64>, Vec<f64>)> = exec.map(BLOCKS, |b| {
            let lo = b * per_block;
            let hi = ((b + 1) * per_block).min(replicates);
            let mut rng = subs.stream(&[purpose::STUDY, m as u64, i as u64, b as u64]);
            let mut xs = Vec::with_capacity(hi.saturating_sub(lo));
            let mut xps = Vec::with_capacity(hi.saturating_sub(lo));
            for _ in lo..hi {
                let z: f64 = rng.sample(StandardNormal);
                xs.push(x[0] + drift_x * h + h.sqrt() * z);
                let u_next = u[0] + drift_u * h + scale_u * h.sqrt() * z;
                xps.push(v_next - gap_next * u_next);
            }
            (xs, xps)
        });
        let xs: Vec<f64> = draws.iter().flat_map(|(a, _)| a.iter().copied()).collect();
        let xps: Vec<f64> = draws.iter().flat_map(|(_, b)| b.iter().copied()).collect();
        let n = replicates as f64;
        let c_euler = h;
        let cp_euler = cp_true + d_prime;
        rows.push(StudyRow {
            m,
            i,
            s,
            d,
            d_prime,
            ratio: ratio(m, i),
            mc_d: sample_variance(&xs) - c_true,
            mc_d_se: c_euler * (2.0 / (n - 1.0)).sqrt(),
            mc_d_prime: sample_variance(&xps) - cp_true,
            mc_d_prime_se: cp_euler * (2.0 / (n - 1.0)).sqrt(),
        });
    }
    Ok(rows)
}
