//! Linear auxiliary processes `dX̃ = (B̃X̃ + β̃(t))dt + σ̃dW` on a segment
//! `[0, T]` ending in `v`, their Gaussian transition law and the derived
//! guiding quantities `v(t)`, `H̃(t)`, `r̃(t, x)` and `J(s)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::guided::tau;
use crate::linalg::{expm, expm1_ratio, expm_with_integral, integrate_matrix, integrate_vector, solve_lyapunov, spd_factor, spd_inverse};
use crate::sde::TimeGrid;

pub type BetaFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Drift offset `β̃` of the auxiliary process.
#[derive(Clone)]
pub enum Beta {
    Constant(DVector<f64>),
    /// Time-dependent offset; only supported together with `B̃ = 0`.
    TimeVarying(BetaFn),
}

impl fmt::Debug for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Constant(b) => f.debug_tuple("Constant").field(&b.as_slice()).finish(),
            Beta::TimeVarying(_) => f.write_str("TimeVarying(..)"),
        }
    }
}

const QUAD_TOL: f64 = 1e-12;
const SERIES_RADIUS: f64 = 0.5;

/// Linear process serving one segment `[0, T]` with end point `v`.
#[derive(Clone, Debug)]
pub struct LinearAuxiliary {
    b: DMatrix<f64>,
    beta: Beta,
    sigma: DMatrix<f64>,
    a: DMatrix<f64>,
    horizon: f64,
    v: DVector<f64>,
    b_norm: f64,
    lyap: Option<DMatrix<f64>>,
}

impl LinearAuxiliary {
    pub fn new(
        b: DMatrix<f64>,
        beta: Beta,
        sigma: DMatrix<f64>,
        horizon: f64,
        v: DVector<f64>,
    ) -> Result<Self> {
        let d = v.len();
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::Dimension {
                what: "auxiliary B",
                expected: d,
                got: b.nrows().max(b.ncols()),
            });
        }
        if sigma.nrows() != d {
            return Err(Error::Dimension {
                what: "auxiliary sigma rows",
                expected: d,
                got: sigma.nrows(),
            });
        }
        if let Beta::Constant(c) = &beta {
            if c.len() != d {
                return Err(Error::Dimension {
                    what: "auxiliary beta",
                    expected: d,
                    got: c.len(),
                });
            }
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("segment length must be positive, got {horizon}")));
        }
        let b_norm = b.norm();
        if matches!(beta, Beta::TimeVarying(_)) && b_norm != 0.0 {
            return Err(Error::Unsupported(
                "time-dependent beta requires B = 0".into(),
            ));
        }
        if b.iter().chain(sigma.iter()).chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite auxiliary coefficients".into()));
        }
        let a = &sigma * sigma.transpose();
        let lyap = if b_norm * horizon > SERIES_RADIUS {
            lyapunov_if_well_posed(&b, &a)
        } else {
            None
        };
        Ok(Self {
            b,
            beta,
            sigma,
            a,
            horizon,
            v,
            b_norm,
            lyap,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn b_mat(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn beta(&self) -> &Beta {
        &self.beta
    }

    pub fn beta_at(&self, t: f64) -> DVector<f64> {
        match &self.beta {
            Beta::Constant(c) => c.clone(),
            Beta::TimeVarying(f) => f(t),
        }
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `ã = σ̃σ̃'`.
    pub fn a_tilde(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.v
    }

    fn zero_b(&self) -> bool {
        self.b_norm == 0.0
    }

    /// `Φ(t + h, t) = e^{B̃h}`.
    pub fn phi(&self, h: f64) -> DMatrix<f64> {
        if self.zero_b() {
            DMatrix::identity(self.dim(), self.dim())
        } else {
            expm(&(&self.b * h))
        }
    }

    /// `K(h)/h` where `K(h) = ∫_0^h e^{B̃r} ã e^{B̃'r} dr`; equals `ã` at `h = 0`.
    pub fn cov_over_h(&self, h: f64) -> DMatrix<f64> {
        if self.zero_b() || h == 0.0 {
            return self.a.clone();
        }
        if self.dim() == 1 {
            return &self.a * expm1_ratio(2.0 * self.b[(0, 0)] * h);
        }
        if self.b_norm * h <= SERIES_RADIUS {
            return self.cov_series(h);
        }
        let k = match &self.lyap {
            Some(l) => {
                let e = self.phi(h);
                l - &e * l * e.transpose()
            }
            None => self.cov_quadrature(h),
        };
        (&k + k.transpose()) * (0.5 / h)
    }

    /// Series `Σ_n h^n/(n+1)! L^n(ã)` with `L(X) = B̃X + XB̃'`.
    fn cov_series(&self, h: f64) -> DMatrix<f64> {
        let mut term = self.a.clone();
        let mut sum = term.clone();
        for n in 1..80 {
            term = (&self.b * &term + &term * self.b.transpose()) * (h / (n + 1) as f64);
            sum += &term;
            if term.norm() <= 1e-17 * sum.norm() {
                break;
            }
        }
        (&sum + sum.transpose()) * 0.5
    }

    fn cov_quadrature(&self, h: f64) -> DMatrix<f64> {
        let f = |r: f64| {
            let e = self.phi(r);
            &e * &self.a * e.transpose()
        };
        integrate_matrix(&f, 0.0, h, QUAD_TOL)
    }

    /// `K(t)`: covariance of `X̃_T` given `X̃_t`.
    pub fn cov(&self, t: f64) -> DMatrix<f64> {
        let h = self.horizon - t;
        self.cov_over_h(h) * h
    }

    /// `∫_t^T Φ(T, s) β̃(s) ds`.
    pub fn mean_offset(&self, t: f64) -> DVector<f64> {
        let h = self.horizon - t;
        match &self.beta {
            Beta::Constant(c) if self.zero_b() => c * h,
            Beta::Constant(c) => expm_with_integral(&self.b, c, h).1,
            Beta::TimeVarying(f) => integrate_vector(f.as_ref(), t, self.horizon, QUAD_TOL),
        }
    }

    /// Mean and covariance of `X̃_T` given `X̃_t = x`.
    pub fn transition_moments(&self, t: f64, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !(t < self.horizon) {
            return Err(Error::Domain(format!(
                "transition moments need t < T = {}, got {t}",
                self.horizon
            )));
        }
        let h = self.horizon - t;
        let mean = self.phi(h) * x + self.mean_offset(t);
        Ok((mean, self.cov(t)))
    }

    /// `log p̃(t, x; T, v)`.
    pub fn log_density(&self, t: f64, x: &DVector<f64>) -> Result<f64> {
        let (mean, cov) = self.transition_moments(t, x)?;
        let (l, logdet) = spd_factor(&cov, "K", Some(t))?;
        let diff = &self.v - mean;
        let z = l
            .solve_lower_triangular(&diff)
            .ok_or(Error::Singular { what: "K", time: Some(t) })?;
        let d = self.dim() as f64;
        Ok(-0.5 * (d * (2.0 * PI).ln() + logdet + z.norm_squared()))
    }

    /// The pull target `v(t) = Φ(t, T)v − ∫_t^T Φ(t, s)β̃(s) ds`.
    pub fn v_at(&self, t: f64) -> DVector<f64> {
        let h = self.horizon - t;
        if h == 0.0 {
            return self.v.clone();
        }
        match &self.beta {
            Beta::Constant(c) if self.zero_b() => &self.v - c * h,
            Beta::Constant(c) => {
                let (e, i) = expm_with_integral(&(-&self.b), c, h);
                e * &self.v - i
            }
            Beta::TimeVarying(f) => &self.v - integrate_vector(f.as_ref(), t, self.horizon, QUAD_TOL),
        }
    }

    /// `v̇(t) = B̃v(t) + β̃(t)`.
    pub fn v_dot_at(&self, t: f64) -> DVector<f64> {
        &self.b * self.v_at(t) + self.beta_at(t)
    }

    fn check_before_end(&self, t: f64) -> Result<()> {
        if self.horizon - t < 1e-12 * self.horizon || !(t >= 0.0) {
            return Err(Error::Domain(format!(
                "t = {t} must lie in [0, T(1 - 1e-12)] with T = {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `H̃(t) = Φ(T, t)' K(t)^{-1} Φ(T, t)`.
    pub fn h_tilde(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_before_end(t)?;
        let phi = self.phi(self.horizon - t);
        let kinv = spd_inverse(&self.cov(t), "K", Some(t))?;
        let h = phi.transpose() * kinv * phi;
        Ok((&h + h.transpose()) * 0.5)
    }

    /// `(H̃(t), r̃(t, x))` with `r̃(t, x) = H̃(t)(v(t) − x)`.
    pub fn h_r_tilde(&self, t: f64, x: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let h = self.h_tilde(t)?;
        let r = &h * (self.v_at(t) - x);
        Ok((h, r))
    }

    /// `J(s) = H̃(τ(s))(T − s)²/T` for `s < T`.
    pub fn j_of_s(&self, s: f64) -> Result<DMatrix<f64>> {
        if !(s < self.horizon) || s < 0.0 {
            return Err(Error::Domain(format!(
                "J(s) needs 0 <= s < T = {}, got {s}",
                self.horizon
            )));
        }
        self.j_at(s, Some(s))
    }

    /// `J(s)` including its limit `ã^{-1}` at `s = T`.
    ///
    /// Uses `H̃(τ(s))·h = Φ'(K(h)/h)^{-1}Φ` with `h = T − τ(s) = (T − s)²/T`,
    /// which stays well conditioned as `s ↑ T`.
    fn j_at(&self, s: f64, time: Option<f64>) -> Result<DMatrix<f64>> {
        let h = (self.horizon - s).powi(2) / self.horizon;
        let phi = self.phi(h);
        let inv = spd_inverse(&self.cov_over_h(h), "K", time)?;
        let j = phi.transpose() * inv * phi;
        Ok((&j + j.transpose()) * 0.5)
    }

    /// `P` with `E[v(t1) − X̃_{t1} | X̃_{t0} = x, X̃_T = v] = P(v(t0) − x)`:
    /// `P = Φ(t1 − t0) − K(t1 − t0)Φ(T − t1)'K(T − t0)^{-1}Φ(T − t0)` for
    /// `t0 < t1 < T`.
    pub fn bridge_mean_propagator(&self, t0: f64, t1: f64) -> Result<DMatrix<f64>> {
        self.check_before_end(t1)?;
        if !(t0 < t1) {
            return Err(Error::Domain(format!("propagator needs t0 < t1, got {t0} and {t1}")));
        }
        let (h, g0, g1) = (t1 - t0, self.horizon - t0, self.horizon - t1);
        let w = spd_inverse(&self.cov_over_h(g0), "K", Some(t0))? * self.phi(g0);
        let pull = self.cov_over_h(h) * self.phi(g1).transpose() * w * (h / g0);
        Ok(self.phi(h) - pull)
    }

    /// Closed form `J(s) = (T−s)²/T · (e^{−B̃h} λ e^{−B̃'h} − λ)^{-1}`, `h = T(1 − s/T)²`,
    /// with `λ` solving `B̃λ + λB̃' + ã = 0`.
    pub fn j_closed_form(&self, s: f64) -> Result<DMatrix<f64>> {
        if !(s < self.horizon) {
            return Err(Error::Domain(format!("J(s) needs s < T, got {s}")));
        }
        let lam = solve_lyapunov(&self.b, &self.a)?;
        let h = (self.horizon - s).powi(2) / self.horizon;
        let e = self.phi(-h);
        let m = &e * &lam * e.transpose() - lam;
        Ok(spd_inverse(&m, "J closed form", Some(s))? * h)
    }
}

fn lyapunov_if_well_posed(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = b.complex_eigenvalues();
    let scale = b.norm();
    let d = eig.len();
    let min_sum = (0..d)
        .flat_map(|i| (i..d).map(move |j| (i, j)))
        .map(|(i, j)| (eig[i] + eig[j]).norm())
        .fold(f64::INFINITY, f64::min);
    if min_sum < 1e-3 * scale {
        return None;
    }
    solve_lyapunov(b, a).ok()
}

/// One segment with its precomputed guiding quantities on a uniform `s`-grid.
#[derive(Clone, Debug)]
pub struct BridgeContext {
    aux: LinearAuxiliary,
    u: DVector<f64>,
    grid: TimeGrid,
    tau: Vec<f64>,
    v_tau: Vec<DVector<f64>>,
    v_dot: Vec<DVector<f64>>,
    beta_tau: Vec<DVector<f64>>,
    j: Vec<DMatrix<f64>>,
    a_inv: DMatrix<f64>,
    scheme: UScheme,
    aux_step: Vec<DMatrix<f64>>,
}

/// Discretisation of the `U`-SDE on the uniform `s`-grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UScheme {
    /// Plain Euler on every drift term.
    Euler,
    /// The drift the `U`-SDE has under the auxiliary process is propagated
    /// exactly by the auxiliary bridge mean; only the remainder
    /// `(2/T)(b̃ − b) − 2(a − ã)JU/(T−s)` and the noise are Euler terms. The
    /// last step stays Euler. Coincides with `Euler` when `B̃ = 0` and removes
    /// the step-size restriction of fast stable modes of `B̃`.
    #[default]
    AuxiliaryExact,
}

impl BridgeContext {
    /// Cache `τ(s_j)`, `v(τ(s_j))`, `v̇(τ(s_j))` and `J(s_j)` for `m` points.
    pub fn new(aux: LinearAuxiliary, u: DVector<f64>, m: usize) -> Result<Self> {
        Self::with_scheme(aux, u, m, UScheme::default())
    }

    pub fn with_scheme(aux: LinearAuxiliary, u: DVector<f64>, m: usize, scheme: UScheme) -> Result<Self> {
        if u.len() != aux.dim() {
            return Err(Error::Dimension {
                what: "bridge start",
                expected: aux.dim(),
                got: u.len(),
            });
        }
        let t_end = aux.horizon();
        let grid = TimeGrid::uniform(0.0, t_end, m)?;
        let a_inv = spd_inverse(aux.a_tilde(), "auxiliary diffusion", Some(t_end))?;
        let tau: Vec<f64> = grid.points().iter().map(|&s| tau(s, t_end)).collect();
        let mut v_tau = Vec::with_capacity(m);
        let mut v_dot = Vec::with_capacity(m);
        let mut beta_tau = Vec::with_capacity(m);
        let mut j = Vec::with_capacity(m);
        for (k, (&s, &t)) in grid.points().iter().zip(&tau).enumerate() {
            let vt = aux.v_at(t);
            let bt = aux.beta_at(t);
            v_dot.push(aux.b_mat() * &vt + &bt);
            v_tau.push(vt);
            beta_tau.push(bt);
            j.push(if k == m - 1 { a_inv.clone() } else { aux.j_at(s, Some(t))? });
        }
        let mut aux_step = Vec::new();
        if scheme == UScheme::AuxiliaryExact && aux.b_mat().iter().any(|&b| b != 0.0) {
            let s = grid.points();
            for k in 0..m.saturating_sub(2) {
                let p = aux.bridge_mean_propagator(tau[k], tau[k + 1])?;
                aux_step.push(p * ((t_end - s[k]) / (t_end - s[k + 1])));
            }
        }
        Ok(Self {
            aux,
            u,
            grid,
            tau,
            v_tau,
            v_dot,
            beta_tau,
            j,
            a_inv,
            scheme,
            aux_step,
        })
    }

    pub fn scheme(&self) -> UScheme {
        self.scheme
    }

    /// Exact `U`-propagator of step `j` under the auxiliary process, when the
    /// scheme uses one for that step.
    pub fn aux_step(&self, j: usize) -> Option<&DMatrix<f64>> {
        self.aux_step.get(j)
    }

    pub fn aux(&self) -> &LinearAuxiliary {
        &self.aux
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn end(&self) -> &DVector<f64> {
        self.aux.end()
    }

    pub fn horizon(&self) -> f64 {
        self.aux.horizon()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn s_grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Image grid `τ(s_j)`.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn v_tau(&self, j: usize) -> &DVector<f64> {
        &self.v_tau[j]
    }

    pub fn v_dot(&self, j: usize) -> &DVector<f64> {
        &self.v_dot[j]
    }

    pub fn beta_tau(&self, j: usize) -> &DVector<f64> {
        &self.beta_tau[j]
    }

    pub fn j(&self, j: usize) -> &DMatrix<f64> {
        &self.j[j]
    }

    pub fn a_tilde_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// `H̃(τ(s_j)) = J(s_j)·T/(T − s_j)²` for `j < m − 1`.
    pub fn h_tilde(&self, j: usize) -> DMatrix<f64> {
        let t = self.horizon();
        let gap = t - self.grid.points()[j];
        &self.j[j] * (t / (gap * gap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn scalar(b: f64, beta: f64, sigma: f64, t: f64, v: f64) -> LinearAuxiliary {
        LinearAuxiliary::new(
            DMatrix::from_element(1, 1, b),
            Beta::Constant(DVector::from_element(1, beta)),
            DMatrix::from_element(1, 1, sigma),
            t,
            DVector::from_element(1, v),
        )
        .unwrap()
    }

    fn random_stable(rng: &mut impl Rng, d: usize) -> LinearAuxiliary {
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0)) - DMatrix::identity(d, d) * 1.5;
        let beta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let s = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rng.random_range(-0.3..0.3) });
        let v = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        LinearAuxiliary::new(b, Beta::Constant(beta), s, 2.0, v).unwrap()
    }

    /// Van Loan's block exponential: an independent route to `K(h)`.
    fn van_loan_cov(aux: &LinearAuxiliary, h: f64) -> DMatrix<f64> {
        let d = aux.dim();
        let mut c = DMatrix::zeros(2 * d, 2 * d);
        c.view_mut((0, 0), (d, d)).copy_from(&(-aux.b_mat() * h));
        c.view_mut((0, d), (d, d)).copy_from(&(aux.a_tilde() * h));
        c.view_mut((d, d), (d, d)).copy_from(&(aux.b_mat().transpose() * h));
        let e = expm(&c);
        let f22 = e.view((d, d), (d, d)).into_owned();
        let g12 = e.view((0, d), (d, d)).into_owned();
        f22.transpose() * g12
    }

    #[test]
    fn brownian_moments() {
        let aux = LinearAuxiliary::new(
            DMatrix::zeros(2, 2),
            Beta::Constant(DVector::zeros(2)),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 2.0]),
            3.0,
            DVector::zeros(2),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let (mean, cov) = aux.transition_moments(1.0, &x).unwrap();
        assert_eq!(mean, x);
        assert!((cov - aux.a_tilde() * 2.0).norm() < 1e-15);
        assert!(aux.transition_moments(3.0, &x).is_err());
    }

    #[test]
    fn scalar_ou_moments() {
        for &(b, s) in &[(-0.8, 0.6), (0.4, 1.3), (-3.0, 0.75), (1e-3, 1.0)] {
            let aux = scalar(b, 0.0, s, 5.0, 0.0);
            for &t in &[0.0, 2.5, 4.9, 4.999] {
                let h: f64 = 5.0 - t;
                let (mean, cov) = aux.transition_moments(t, &DVector::from_element(1, 1.7)).unwrap();
                let em = (b * h).exp() * 1.7;
                let ec = s * s * ((2.0 * b * h).exp() - 1.0) / (2.0 * b);
                assert!((mean[0] - em).abs() <= 1e-10 * em.abs().max(1.0), "b={b} t={t}");
                assert!((cov[(0, 0)] - ec).abs() <= 1e-10 * ec.max(1.0), "b={b} t={t}: {} vs {ec}", cov[(0, 0)]);
            }
        }
    }

    #[test]
    fn covariance_vanishes_at_end() {
        let aux = scalar(-1.0, 0.3, 1.0, 1.0, 0.0);
        let c = aux.cov(1.0 - 1e-9);
        assert!(c.norm() <= 1e-8);
    }

    #[test]
    fn covariance_routes_agree_with_van_loan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let aux = random_stable(&mut rng, 3);
            for &h in &[1e-6, 0.01, 0.2, 1.0, 2.0] {
                let k = aux.cov_over_h(h) * h;
                let o = van_loan_cov(&aux, h);
                assert!((&k - &o).norm() <= 1e-10 * o.norm(), "h={h}");
            }
        }
        // singular B (one zero eigenvalue) exercises the quadrature route
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        let aux = LinearAuxiliary::new(
            b,
            Beta::Constant(DVector::zeros(2)),
            DMatrix::identity(2, 2),
            4.0,
            DVector::zeros(2),
        )
        .unwrap();
        assert!(aux.lyap.is_none());
        let k = aux.cov(0.0);
        let o = van_loan_cov(&aux, 4.0);
        assert!((&k - &o).norm() <= 1e-10 * o.norm());
    }

    #[test]
    fn log_density_standard_normal() {
        let aux = scalar(0.0, 0.0, 1.0, 1.0, 0.4);
        let l = aux.log_density(0.0, &DVector::from_element(1, 0.4)).unwrap();
        assert!((l + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_density_translation_invariant() {
        let mk = |v: f64| {
            LinearAuxiliary::new(
                DMatrix::zeros(2, 2),
                Beta::Constant(DVector::from_vec(vec![0.2, -0.1])),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.7]),
                1.3,
                DVector::from_vec(vec![v, 1.0 + v]),
            )
            .unwrap()
        };
        let x = DVector::from_vec(vec![0.1, 0.5]);
        let c = 2.7;
        let a = mk(0.0).log_density(0.2, &x).unwrap();
        let b = mk(c).log_density(0.2, &x.add_scalar(c)).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn log_density_matches_monte_carlo_ou() {
        // density of X_T at v estimated by a Gaussian-kernel average over exact OU draws
        let (b, s, t_end, x0, v) = (-0.7, 0.9, 1.5, 0.8, 0.2);
        let aux = scalar(b, 0.0, s, t_end, v);
        let p = aux.log_density(0.0, &DVector::from_element(1, x0)).unwrap().exp();
        let mean = (b * t_end).exp() * x0;
        let sd = (s * s * ((2.0 * b * t_end).exp() - 1.0) / (2.0 * b)).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let bw: f64 = 0.05;
        let n = 100_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let x = mean + sd * z;
                (-(x - v).powi(2) / (2.0 * bw * bw)).exp() / (bw * (2.0 * PI).sqrt())
            })
            .collect();
        let est = vals.iter().sum::<f64>() / n as f64;
        let se = (vals.iter().map(|k| (k - est).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        // kernel smoothing bias: the estimate targets N(mean, sd² + bw²) at v
        let smoothed = (-(v - mean).powi(2) / (2.0 * (sd * sd + bw * bw))).exp() / ((sd * sd + bw * bw) * 2.0 * PI).sqrt();
        assert!((est - smoothed).abs() < 3.0 * se, "{est} {smoothed} {se}");
        assert!((smoothed - p).abs() < 0.01 * p);
    }

    #[test]
    fn v_of_s_cases() {
        let aux = scalar(0.0, 0.5, 1.0, 2.0, 3.0);
        assert_eq!(aux.v_at(2.0)[0], 3.0);
        assert!((aux.v_at(0.5)[0] - (3.0 - 0.5 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn v_flow_consistency() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let aux = random_stable(&mut rng, 3);
        for _ in 0..10 {
            let s = rng.random_range(0.0..2.0);
            let vs = aux.v_at(s);
            let (mean, _) = aux.transition_moments(s, &vs).unwrap();
            assert!((&mean - aux.end()).norm() <= 1e-9, "{}", (&mean - aux.end()).norm());
        }
    }

    #[test]
    fn v_dot_finite_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let aux = random_stable(&mut rng, 2);
        let e = 1e-5;
        for &t in &[0.1, 1.0, 1.9] {
            let fd = (aux.v_at(t + e) - aux.v_at(t - e)) / (2.0 * e);
            assert!((fd - aux.v_dot_at(t)).norm() <= 1e-6);
        }
        let end = aux.v_dot_at(2.0);
        let direct = aux.b_mat() * aux.end() + aux.beta_at(2.0);
        assert!((end - direct).norm() < 1e-15);
        let flat = scalar(0.0, 0.7, 1.0, 1.0, 0.0);
        assert_eq!(flat.v_dot_at(0.3)[0], 0.7);
    }

    #[test]
    fn h_tilde_cases() {
        let aux = LinearAuxiliary::new(
            DMatrix::zeros(2, 2),
            Beta::Constant(DVector::zeros(2)),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.5]),
            2.0,
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        let h = aux.h_tilde(0.5).unwrap();
        let expect = spd_inverse(aux.a_tilde(), "a", None).unwrap() / 1.5;
        assert!((h - expect).norm() < 1e-12);
        let vt = aux.v_at(0.7);
        let (_, r) = aux.h_r_tilde(0.7, &vt).unwrap();
        assert_eq!(r.norm(), 0.0);
        assert!(aux.h_tilde(2.0).is_err());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let aux = random_stable(&mut rng, 3);
            let t = rng.random_range(0.0..1.99);
            let h = aux.h_tilde(t).unwrap();
            assert!((&h - h.transpose()).norm() == 0.0);
            assert!(h.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn j_brownian_is_constant() {
        let aux = scalar(0.0, 0.4, 0.5, 3.0, 0.0);
        for &s in &[0.0, 1.0, 2.9, 3.0 * (1.0 - 1e-3)] {
            assert!((aux.j_of_s(s).unwrap()[(0, 0)] - 4.0).abs() < 1e-12);
        }
        assert!(aux.j_of_s(3.0).is_err());
    }

    #[test]
    fn j_limit_near_end() {
        let ou = scalar(-1.3, 0.2, 0.8, 1.0, 0.5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let stable2 = random_stable(&mut rng, 2);
        for aux in [&ou, &stable2] {
            let t = aux.horizon();
            let d = aux.dim();
            let err = |s: f64| (aux.a_tilde() * aux.j_of_s(s).unwrap() - DMatrix::identity(d, d)).norm();
            assert!(err(t * (1.0 - 1e-3)) <= 0.01);
            let mut prev = f64::INFINITY;
            for k in 0..50 {
                let s = t * (1.0 - 0.5 * 0.85f64.powi(k));
                let e = err(s);
                assert!(e < prev, "not decreasing at k={k}");
                prev = e;
            }
        }
    }

    #[test]
    fn j_closed_form_matches_direct() {
        let ou = scalar(-0.9, 0.0, 1.1, 2.0, 1.0);
        for k in 0..20 {
            let s = 1.9 * k as f64 / 19.0;
            let a = ou.j_of_s(s).unwrap();
            let b = ou.j_closed_form(s).unwrap();
            assert!((a - b).norm() <= 1e-8, "s={s}");
        }
    }

    #[test]
    fn j_symmetric_psd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let aux = random_stable(&mut rng, 3);
        for k in 0..20 {
            let j = aux.j_of_s(2.0 * k as f64 / 20.0).unwrap();
            assert_eq!((&j - j.transpose()).norm(), 0.0);
            assert!(j.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
        }
    }

    #[test]
    fn bridge_propagator_scalar_closed_form() {
        let k = |b: f64, a: f64, g: f64| a * ((2.0 * b * g).exp() - 1.0) / (2.0 * b);
        for &(b, sig) in &[(-4.0, 0.8), (-0.3, 1.2), (0.7, 0.5)] {
            let aux = scalar(b, 0.4, sig, 1.5, 2.0);
            let a = sig * sig;
            for &(t0, t1) in &[(0.0, 0.1), (0.3, 1.2), (1.4, 1.499)] {
                let (h, g0, g1) = (t1 - t0, 1.5 - t0, 1.5 - t1);
                let want = (b * h).exp() - k(b, a, h) * (b * g1).exp() * (b * g0).exp() / k(b, a, g0);
                let got = aux.bridge_mean_propagator(t0, t1).unwrap()[(0, 0)];
                assert!((got - want).abs() < 1e-10 * want.abs().max(1e-3), "b={b} {t0}->{t1}: {got} vs {want}");
            }
        }
        let bm = scalar(0.0, 0.0, 1.0, 2.0, 0.0);
        assert!((bm.bridge_mean_propagator(0.5, 1.5).unwrap()[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!(bm.bridge_mean_propagator(1.0, 1.0).is_err());
        assert!(bm.bridge_mean_propagator(1.0, 2.0).is_err());
    }

    #[test]
    fn bridge_propagator_composes() {
        // the auxiliary bridge is Markov, so its mean propagators compose
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let aux = random_stable(&mut rng, 3);
        let (t0, t1, t2) = (0.1, 0.7, 1.6);
        let direct = aux.bridge_mean_propagator(t0, t2).unwrap();
        let two = aux.bridge_mean_propagator(t1, t2).unwrap() * aux.bridge_mean_propagator(t0, t1).unwrap();
        assert!((&direct - two).norm() < 1e-10 * direct.norm());
    }

    #[test]
    fn time_varying_beta() {
        let f: BetaFn = Arc::new(|t: f64| DVector::from_vec(vec![t.cos(), 2.0 * t]));
        let aux = LinearAuxiliary::new(
            DMatrix::zeros(2, 2),
            Beta::TimeVarying(f.clone()),
            DMatrix::identity(2, 2),
            2.0,
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let v = aux.v_at(0.5);
        assert!((v[0] - (1.0 - (2f64.sin() - 0.5f64.sin()))).abs() < 1e-12);
        assert!((v[1] - (1.0 - (4.0 - 0.25))).abs() < 1e-12);
        let mean = aux.transition_moments(0.5, &v).unwrap().0;
        assert!((mean - aux.end()).norm() < 1e-12);
        // refinement: a tighter tolerance changes v(s) by <= 1e-8
        let tight = DVector::from_element(2, 1.0) - integrate_vector(f.as_ref(), 0.5, 2.0, 1e-15);
        assert!((tight - v).norm() <= 1e-8);

        let bad = LinearAuxiliary::new(
            DMatrix::identity(2, 2),
            Beta::TimeVarying(f),
            DMatrix::identity(2, 2),
            2.0,
            DVector::zeros(2),
        );
        assert!(matches!(bad, Err(Error::Unsupported(_))));
    }

    #[test]
    fn bridge_context_caches() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let aux = random_stable(&mut rng, 2);
        let u = DVector::from_vec(vec![0.1, 0.2]);
        let two = BridgeContext::new(aux.clone(), u.clone(), 2).unwrap();
        assert_eq!(two.tau(), &[0.0, 2.0]);
        assert_eq!(two.v_tau(1), aux.end());

        let ctx = BridgeContext::new(aux.clone(), u, 17).unwrap();
        for k in 0..16 {
            let s = ctx.s_grid().points()[k];
            assert_eq!(ctx.tau()[k], tau(s, 2.0));
            assert_eq!(*ctx.v_tau(k), aux.v_at(ctx.tau()[k]));
            assert_eq!(*ctx.j(k), aux.j_of_s(s).unwrap());
        }
        assert_eq!(ctx.v_tau(16), aux.end());
        let tail = ctx.v_tau(15);
        assert!((tail - aux.end()).norm() <= 1e-2 * (1.0 + aux.end().norm()));
    }
}
