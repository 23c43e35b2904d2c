//! Integrated autocorrelation time.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// ACT estimate; `constant` marks a trace with zero variance (ACT reported as 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActEstimate {
    pub act: f64,
    pub constant: bool,
}

/// Empirical autocorrelation `ρ_0..ρ_{n−1}` by zero-padded FFT.
pub fn autocorrelation(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = xs
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// Integrated autocorrelation time `1 + 2Σρ_k` truncated by Geyer's initial
/// monotone positive sequence.
pub fn act_estimate(xs: &[f64]) -> Result<ActEstimate> {
    if xs.len() < 100 {
        return Err(Error::Parameter(format!(
            "ACT needs at least 100 draws, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("ACT of a non-finite trace".into()));
    }
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return Ok(ActEstimate { act: 1.0, constant: true });
    }
    let rho = autocorrelation(xs);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 0..rho.len() / 2 {
        let mut g = rho[2 * k] + rho[2 * k + 1];
        if g <= 0.0 {
            break;
        }
        g = g.min(prev);
        prev = g;
        sum += g;
    }
    Ok(ActEstimate {
        act: (2.0 * sum - 1.0).max(1e-12),
        constant: false,
    })
}
