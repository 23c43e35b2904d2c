//! Guided proposals: the guided drift, the likelihood integrand `G`, the
//! time-changed and scaled process `U` realising the innovation map `g(θ, Z)`,
//! and both discretisations of `log Ψ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linproc::{BridgeContext, LinearAuxiliary};
use crate::sde::{DiffusionModel, Observations, Path, TimeGrid, WienerIncrements};

/// Time change `τ(s) = s(2 − s/T)`.
pub fn tau(s: f64, t_end: f64) -> f64 {
    s * (2.0 - s / t_end)
}

/// `τ'(s) = 2(1 − s/T)`.
pub fn tau_prime(s: f64, t_end: f64) -> f64 {
    2.0 * (1.0 - s / t_end)
}

/// How closely an auxiliary process is expected to satisfy `ã = a(T, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matching {
    /// Equality to 1e-8 is enforced.
    Exact,
    /// Relative Frobenius mismatch above `rel_tol` is reported, not rejected.
    Approximate { rel_tol: f64 },
}

/// One observation interval `[t0, t1]` with end points `u` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl Segment {
    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Consecutive observation pairs as segments.
pub fn segments(obs: &Observations) -> Vec<Segment> {
    (1..obs.len())
        .map(|i| Segment {
            index: i - 1,
            t0: obs.times[i - 1],
            t1: obs.times[i],
            u: obs.values[i - 1].clone(),
            v: obs.values[i].clone(),
        })
        .collect()
}

/// A diffusion model together with its prescribed linear auxiliary process.
pub trait GuidedModel: DiffusionModel {
    /// Auxiliary process for `seg`, in segment-local time `[0, T]`.
    fn auxiliary(&self, theta: &[f64], seg: &Segment) -> Result<LinearAuxiliary>;

    fn auxiliary_depends_on_theta(&self) -> bool {
        true
    }

    fn matching(&self) -> Matching {
        Matching::Exact
    }

    /// Basis `Φ(t, x)` (d × N) when the drift is `Φ(t, x)ϑ` with
    /// `ϑ = θ[basis_indices()]`.
    fn drift_basis(&self, _t: f64, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn basis_indices(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Paths are constrained to the admissible set.
    fn nonnegative(&self) -> bool {
        false
    }

    /// Membership of a state in the constraint set (componentwise
    /// nonnegativity unless overridden); only consulted when `nonnegative()`.
    fn admissible(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v >= 0.0)
    }
}

/// Proposal path `U` on the `s`-grid with `X∘ = Γ(s, U)` on the `τ`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UPath {
    s_grid: TimeGrid,
    u: DMatrix<f64>,
    x: Path,
}

impl UPath {
    pub fn s_grid(&self) -> &TimeGrid {
        &self.s_grid
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// The proposal `X∘` at `τ(s_j)`, segment-local times.
    pub fn x(&self) -> &Path {
        &self.x
    }

    pub fn is_nonnegative(&self) -> bool {
        self.x.states().iter().all(|&v| v >= 0.0)
    }
}

/// Guided proposal for one segment under a fixed parameter.
#[derive(Clone)]
pub struct GuidedBridge {
    model: Arc<dyn GuidedModel>,
    theta: Vec<f64>,
    ctx: Arc<BridgeContext>,
    t0: f64,
    mismatch: f64,
}

impl fmt::Debug for GuidedBridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GuidedBridge")
            .field("theta", &self.theta)
            .field("t0", &self.t0)
            .field("horizon", &self.ctx.horizon())
            .field("m", &self.ctx.m())
            .field("mismatch", &self.mismatch)
            .finish()
    }
}

struct Step {
    x: DVector<f64>,
    b: DVector<f64>,
    sigma: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl GuidedBridge {
    /// Check dimensions, the matching condition and (for constrained models)
    /// feasibility of the end points.
    pub fn new(model: Arc<dyn GuidedModel>, theta: Vec<f64>, ctx: Arc<BridgeContext>, t0: f64) -> Result<Self> {
        let d = model.state_dim();
        if ctx.end().len() != d {
            return Err(Error::Dimension {
                what: "bridge end point",
                expected: d,
                got: ctx.end().len(),
            });
        }
        if ctx.aux().sigma().ncols() != model.noise_dim() && ctx.aux().sigma().nrows() != d {
            return Err(Error::Dimension {
                what: "auxiliary sigma",
                expected: d,
                got: ctx.aux().sigma().nrows(),
            });
        }
        if model.nonnegative() {
            for (name, p) in [("start", ctx.start()), ("end", ctx.end())] {
                if !model.admissible(p.as_slice()) {
                    return Err(Error::Infeasible(format!(
                        "bridge {name} point {:?} violates the nonnegativity constraint",
                        p.as_slice()
                    )));
                }
            }
        }
        let t_end = ctx.horizon();
        let a_end = model.diffusion(t0 + t_end, ctx.end(), &theta);
        let gap = (ctx.aux().a_tilde() - &a_end).norm();
        let scale = a_end.norm();
        let mismatch = if scale > 0.0 { gap / scale } else { gap };
        if model.matching() == Matching::Exact && gap > 1e-8 * scale.max(1.0) {
            return Err(Error::Domain(format!(
                "matching condition violated: |a_tilde - a(T, v)| = {gap:e}"
            )));
        }
        Ok(Self {
            model,
            theta,
            ctx,
            t0,
            mismatch,
        })
    }

    /// Build the auxiliary process, context and bridge for `seg` with `m` points.
    pub fn build(model: Arc<dyn GuidedModel>, theta: &[f64], seg: &Segment, m: usize) -> Result<Self> {
        let aux = model.auxiliary(theta, seg)?;
        let ctx = BridgeContext::new(aux, seg.u.clone(), m)?;
        Self::new(model, theta.to_vec(), Arc::new(ctx), seg.t0)
    }

    pub fn model(&self) -> &Arc<dyn GuidedModel> {
        &self.model
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn ctx(&self) -> &Arc<BridgeContext> {
        &self.ctx
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// True unless the model is constrained and some state of `up` leaves
    /// the admissible set.
    pub fn admissible(&self, up: &UPath) -> bool {
        !self.model.nonnegative()
            || up
                .x
                .states()
                .column_iter()
                .all(|c| self.model.admissible(c.as_slice()))
    }

    /// Relative mismatch `|ã − a(T, v)|_F / |a(T, v)|_F`.
    pub fn mismatch(&self) -> f64 {
        self.mismatch
    }

    /// True when an approximate-matching model exceeds its tolerance.
    pub fn mismatch_warning(&self) -> bool {
        match self.model.matching() {
            Matching::Exact => false,
            Matching::Approximate { rel_tol } => self.mismatch > rel_tol,
        }
    }

    /// `log p̃(0, u; T, v)`.
    pub fn log_ptilde(&self) -> Result<f64> {
        self.ctx.aux().log_density(0.0, self.ctx.start())
    }

    /// Guided drift `b∘(t, x) = b(t, x) + a(t, x) r̃(t, x)`, local time `t < T`.
    pub fn guided_drift(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (_, r) = self.ctx.aux().h_r_tilde(t, x)?;
        let tt = self.t0 + t;
        Ok(self.model.drift(tt, x, &self.theta) + self.model.diffusion(tt, x, &self.theta) * r)
    }

    fn g_value(
        &self,
        x: &DVector<f64>,
        b: &DVector<f64>,
        a: &DMatrix<f64>,
        beta: &DVector<f64>,
        h: &DMatrix<f64>,
        vt: &DVector<f64>,
    ) -> f64 {
        let aux = self.ctx.aux();
        let r = h * (vt - x);
        let db = b - (aux.b_mat() * x + beta);
        let da = a - aux.a_tilde();
        let m = h - &r * r.transpose();
        db.dot(&r) - 0.5 * da.component_mul(&m).sum()
    }

    /// `G(t, x) = (b − b̃)'r̃ − ½ tr[(a − ã)(H̃ − r̃r̃')]`, local time `t < T`.
    pub fn g_integrand(&self, t: f64, x: &DVector<f64>) -> Result<f64> {
        let aux = self.ctx.aux();
        let h = aux.h_tilde(t)?;
        let tt = self.t0 + t;
        let b = self.model.drift(tt, x, &self.theta);
        let a = self.model.diffusion(tt, x, &self.theta);
        Ok(self.g_value(x, &b, &a, &aux.beta_at(t), &h, &aux.v_at(t)))
    }

    /// Left-Riemann sum of `G` over the grid of `path` (end point excluded).
    pub fn log_psi_direct(&self, path: &Path) -> Result<f64> {
        let ts = path.times();
        let cached = ts == self.ctx.tau();
        let mut acc = 0.0;
        for j in 0..ts.len() - 1 {
            let x = path.state(j);
            let g = if cached {
                let tt = self.t0 + ts[j];
                let b = self.model.drift(tt, &x, &self.theta);
                let a = self.model.diffusion(tt, &x, &self.theta);
                self.g_value(&x, &b, &a, self.ctx.beta_tau(j), &self.ctx.h_tilde(j), self.ctx.v_tau(j))
            } else {
                self.g_integrand(ts[j], &x)?
            };
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    index: j,
                    time: ts[j],
                    detail: "G integrand".into(),
                });
            }
            acc += g * (ts[j + 1] - ts[j]);
        }
        Ok(acc)
    }

    /// Drift and noise scale of the `U`-SDE at `(s, U)`.
    pub fn u_sde_coefficients(&self, s: f64, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let aux = self.ctx.aux();
        let t_end = aux.horizon();
        let j = aux.j_of_s(s)?;
        let t = tau(s, t_end);
        let x = aux.v_at(t) - u * (t_end - s);
        let tt = self.t0 + t;
        let b = self.model.drift(tt, &x, &self.theta);
        let sigma = self.model.dispersion(tt, &x, &self.theta);
        let a = &sigma * sigma.transpose();
        Ok(self.coefficients(s, u, &aux.v_dot_at(t), &j, &b, &sigma, &a))
    }

    #[allow(clippy::too_many_arguments)]
    fn coefficients(
        &self,
        s: f64,
        u: &DVector<f64>,
        v_dot: &DVector<f64>,
        j: &DMatrix<f64>,
        b: &DVector<f64>,
        sigma: &DMatrix<f64>,
        a: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let t_end = self.ctx.horizon();
        let gap = t_end - s;
        let aj_u = a * (j * u);
        let drift = (v_dot - b) * (2.0 / t_end) + (u - aj_u * 2.0) / gap;
        let scale = sigma * (-(2.0 / (t_end * gap)).sqrt());
        (drift, scale)
    }

    /// `U_j` advanced over step `j` without the noise term.
    fn deterministic_step(&self, j: usize, u: &DVector<f64>, drift: DVector<f64>, ds: f64) -> DVector<f64> {
        match self.ctx.aux_step(j) {
            None => u + drift * ds,
            Some(e) => {
                let ctx = &*self.ctx;
                let t_end = ctx.horizon();
                let gap = t_end - ctx.s_grid().points()[j];
                let aj_u = ctx.aux().a_tilde() * (ctx.j(j) * u);
                let lin = ctx.aux().b_mat() * u * (2.0 * gap / t_end) + (u - aj_u * 2.0) / gap;
                e * u + (drift - lin) * ds
            }
        }
    }

    fn eval_step(&self, j: usize, x: DVector<f64>) -> Step {
        let tt = self.t0 + self.ctx.tau()[j];
        let b = self.model.drift(tt, &x, &self.theta);
        let sigma = self.model.dispersion(tt, &x, &self.theta);
        let a = &sigma * sigma.transpose();
        Step { x, b, sigma, a }
    }

    fn check_innovations(&self, z: &WienerIncrements) -> Result<()> {
        if z.grid() != self.ctx.s_grid() {
            return Err(Error::InvalidGrid("innovations do not live on the bridge s-grid".into()));
        }
        if z.dim() != self.model.noise_dim() {
            return Err(Error::Dimension {
                what: "innovation dimension",
                expected: self.model.noise_dim(),
                got: z.dim(),
            });
        }
        Ok(())
    }

    /// Euler scheme for `U` driven by `z`, optionally accumulating the
    /// time-changed `log Ψ` along the way.
    fn run(&self, z: &WienerIncrements, weigh: bool) -> Result<(UPath, f64)> {
        self.check_innovations(z)?;
        let ctx = &*self.ctx;
        let m = ctx.m();
        let d = self.model.state_dim();
        let t_end = ctx.horizon();
        let s = ctx.s_grid().points();
        let mut us = DMatrix::zeros(d, m);
        let mut xs = DMatrix::zeros(d, m);
        let mut u = (ctx.v_tau(0) - ctx.start()) / t_end;
        let mut log_psi = 0.0;
        for j in 0..m - 1 {
            let x = if j == 0 {
                ctx.start().clone()
            } else {
                ctx.v_tau(j) - &u * (t_end - s[j])
            };
            if u.iter().chain(x.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    index: j,
                    time: ctx.tau()[j],
                    detail: "guided proposal state".into(),
                });
            }
            us.set_column(j, &u);
            xs.set_column(j, &x);
            let st = self.eval_step(j, x);
            let ds = s[j + 1] - s[j];
            if weigh {
                let g = self.g_value(&st.x, &st.b, &st.a, ctx.beta_tau(j), &ctx.h_tilde(j), ctx.v_tau(j));
                if !g.is_finite() {
                    return Err(Error::NonFinite {
                        index: j,
                        time: ctx.tau()[j],
                        detail: "G integrand".into(),
                    });
                }
                log_psi += g * tau_prime(s[j], t_end) * ds;
            }
            let (drift, scale) = self.coefficients(s[j], &u, ctx.v_dot(j), ctx.j(j), &st.b, &st.sigma, &st.a);
            u = self.deterministic_step(j, &u, drift, ds) + scale * z.matrix().column(j);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: m - 1,
                time: t_end,
                detail: "guided proposal state".into(),
            });
        }
        us.set_column(m - 1, &u);
        xs.set_column(m - 1, ctx.end());
        let x = Path::new(TimeGrid::new(ctx.tau().to_vec())?, xs)?;
        Ok((
            UPath {
                s_grid: ctx.s_grid().clone(),
                u: us,
                x,
            },
            log_psi,
        ))
    }

    /// The innovation map `g(θ, Z)`.
    pub fn solve_g(&self, z: &WienerIncrements) -> Result<UPath> {
        Ok(self.run(z, false)?.0)
    }

    /// `g(θ, Z)` together with its time-changed `log Ψ`, in one pass.
    pub fn solve_and_weigh(&self, z: &WienerIncrements) -> Result<(UPath, f64)> {
        self.run(z, true)
    }

    /// `Σ_j G(τ(s_j), Γ(s_j, U_j)) τ'(s_j) Δs` over `j = 0..m−2`.
    pub fn log_psi_timechanged(&self, up: &UPath) -> Result<f64> {
        let ctx = &*self.ctx;
        let t_end = ctx.horizon();
        let s = ctx.s_grid().points();
        let mut acc = 0.0;
        for j in 0..ctx.m() - 1 {
            let st = self.eval_step(j, up.x.state(j));
            let g = self.g_value(&st.x, &st.b, &st.a, ctx.beta_tau(j), &ctx.h_tilde(j), ctx.v_tau(j));
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    index: j,
                    time: ctx.tau()[j],
                    detail: "G integrand".into(),
                });
            }
            acc += g * tau_prime(s[j], t_end) * (s[j + 1] - s[j]);
        }
        Ok(acc)
    }

    /// Innovations `Z` with `g(θ, Z) = x` on the `τ`-grid.
    ///
    /// The last increment does not influence `x` and is taken from `z_last`.
    /// Needs a square invertible dispersion.
    pub fn invert_g(&self, x: &Path, z_last: &DVector<f64>) -> Result<WienerIncrements> {
        let ctx = &*self.ctx;
        let d = self.model.state_dim();
        if self.model.noise_dim() != d {
            return Err(Error::Unsupported(format!(
                "inverting the innovation map needs a square dispersion, got {d}x{}",
                self.model.noise_dim()
            )));
        }
        let m = ctx.m();
        if x.len() != m {
            return Err(Error::Dimension {
                what: "path length",
                expected: m,
                got: x.len(),
            });
        }
        let t_end = ctx.horizon();
        let s = ctx.s_grid().points();
        let u_at = |j: usize| (ctx.v_tau(j) - x.state(j)) / (t_end - s[j]);
        let mut inc = DMatrix::zeros(d, m - 1);
        let mut u = u_at(0);
        for j in 0..m.saturating_sub(2) {
            let next = u_at(j + 1);
            let st = self.eval_step(j, x.state(j));
            let (drift, scale) = self.coefficients(s[j], &u, ctx.v_dot(j), ctx.j(j), &st.b, &st.sigma, &st.a);
            let rhs = &next - self.deterministic_step(j, &u, drift, s[j + 1] - s[j]);
            let zj = scale.lu().solve(&rhs).ok_or(Error::Singular {
                what: "dispersion",
                time: Some(ctx.tau()[j]),
            })?;
            inc.set_column(j, &zj);
            u = next;
        }
        inc.set_column(m - 2, z_last);
        WienerIncrements::new(ctx.s_grid().clone(), inc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linproc::{Beta, UScheme};
    use crate::rng::Substreams;
    use crate::sde::sample_wiener;

    /// `dX = (Bx + β)dt + σ dW` with a fixed auxiliary that may differ from it.
    struct Lin {
        b: DMatrix<f64>,
        beta: DVector<f64>,
        sigma: DMatrix<f64>,
        aux_b: DMatrix<f64>,
        aux_beta: DVector<f64>,
    }

    impl DiffusionModel for Lin {
        fn state_dim(&self) -> usize {
            self.b.nrows()
        }
        fn noise_dim(&self) -> usize {
            self.sigma.ncols()
        }
        fn param_names(&self) -> Vec<String> {
            vec![]
        }
        fn drift(&self, _t: f64, x: &DVector<f64>, _th: &[f64]) -> DVector<f64> {
            &self.b * x + &self.beta
        }
        fn dispersion(&self, _t: f64, _x: &DVector<f64>, _th: &[f64]) -> DMatrix<f64> {
            self.sigma.clone()
        }
    }

    impl GuidedModel for Lin {
        fn auxiliary(&self, _th: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
            LinearAuxiliary::new(
                self.aux_b.clone(),
                Beta::Constant(self.aux_beta.clone()),
                self.sigma.clone(),
                seg.horizon(),
                seg.v.clone(),
            )
        }
    }

    fn scalar_lin(b: f64, beta: f64, sigma: f64, aux_b: f64, aux_beta: f64) -> Arc<dyn GuidedModel> {
        Arc::new(Lin {
            b: DMatrix::from_element(1, 1, b),
            beta: DVector::from_element(1, beta),
            sigma: DMatrix::from_element(1, 1, sigma),
            aux_b: DMatrix::from_element(1, 1, aux_b),
            aux_beta: DVector::from_element(1, aux_beta),
        })
    }

    fn seg1(u: f64, v: f64, t: f64) -> Segment {
        Segment {
            index: 0,
            t0: 0.0,
            t1: t,
            u: DVector::from_element(1, u),
            v: DVector::from_element(1, v),
        }
    }

    #[test]
    fn tau_values() {
        assert_eq!(tau(0.0, 3.0), 0.0);
        assert_eq!(tau(3.0, 3.0), 3.0);
        assert_eq!(tau(1.0, 2.0), 1.5);
        let e = 1e-6;
        for &s in &[0.1, 0.9, 1.7] {
            let fd = (tau(s + e, 2.0) - tau(s - e, 2.0)) / (2.0 * e);
            assert!((fd - tau_prime(s, 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn brownian_bridge_drift() {
        let model = scalar_lin(0.0, 0.0, 0.7, 0.0, 0.0);
        let br = GuidedBridge::build(model, &[], &seg1(0.0, 1.5, 2.0), 10).unwrap();
        let x = DVector::from_element(1, 0.3);
        let d = br.guided_drift(0.5, &x).unwrap();
        assert!((d[0] - (1.5 - 0.3) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn guiding_term_vanishes_on_target() {
        let model = scalar_lin(-0.4, 0.3, 0.7, -1.0, 0.2);
        let br = GuidedBridge::build(model.clone(), &[], &seg1(0.0, 1.5, 2.0), 10).unwrap();
        let t = 0.8;
        let x = br.ctx().aux().v_at(t);
        assert!((br.guided_drift(t, &x).unwrap() - model.drift(t, &x, &[])).norm() < 1e-14);
    }

    #[test]
    fn brownian_auxiliary_with_constant_beta() {
        // b∘ = b + a a(T,v)^{-1}(v − x − ∫_t^T β̃)/(T − t)
        let model = scalar_lin(-0.4, 0.3, 0.7, 0.0, 0.9);
        let br = GuidedBridge::build(model.clone(), &[], &seg1(0.0, 1.5, 2.0), 10).unwrap();
        let (t, x) = (0.6, DVector::from_element(1, -0.2));
        let expect = model.drift(t, &x, &[])[0] + (1.5 - (-0.2) - 0.9 * 1.4) / 1.4;
        assert!((br.guided_drift(t, &x).unwrap()[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn g_vanishes_for_matched_linear_model() {
        let model = scalar_lin(-0.4, 0.3, 0.7, -0.4, 0.3);
        let br = GuidedBridge::build(model, &[], &seg1(0.0, 1.5, 2.0), 10).unwrap();
        for &(t, x) in &[(0.0, 0.3), (1.2, -4.0), (1.99, 8.0)] {
            assert!(br.g_integrand(t, &DVector::from_element(1, x)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn g_only_drift_term_when_diffusions_agree() {
        let model = scalar_lin(-0.4, 0.3, 0.7, -1.0, 0.0);
        let br = GuidedBridge::build(model, &[], &seg1(0.0, 1.5, 2.0), 10).unwrap();
        let (t, x) = (0.5, DVector::from_element(1, 0.25));
        let aux = br.ctx().aux();
        let (_, r) = aux.h_r_tilde(t, &x).unwrap();
        let db = (-0.4 * 0.25 + 0.3) - (-1.0 * 0.25);
        assert!((br.g_integrand(t, &x).unwrap() - db * r[0]).abs() < 1e-14);
    }

    #[test]
    fn log_psi_constant_g_single_interval() {
        // b − b̃ = c constant, a = ã, r̃ ≡ 1 because x is chosen on the line v(t) − H̃^{-1}
        let model = scalar_lin(0.0, 0.5, 1.0, 0.0, 0.0);
        let br = GuidedBridge::build(model, &[], &seg1(0.0, 1.0, 1.0), 2).unwrap();
        let t0 = 0.0;
        let x0 = br.ctx().aux().v_at(t0)[0] - 1.0; // H̃(0) = 1 so r̃ = 1
        let p = Path::new(TimeGrid::new(vec![0.0, 1.0]).unwrap(), DMatrix::from_row_slice(1, 2, &[x0, 1.0])).unwrap();
        assert!((br.log_psi_direct(&p).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn matching_condition_enforced() {
        struct Mis;
        impl DiffusionModel for Mis {
            fn state_dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                1
            }
            fn param_names(&self) -> Vec<String> {
                vec![]
            }
            fn drift(&self, _t: f64, _x: &DVector<f64>, _th: &[f64]) -> DVector<f64> {
                DVector::zeros(1)
            }
            fn dispersion(&self, _t: f64, _x: &DVector<f64>, _th: &[f64]) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, 2.0)
            }
        }
        impl GuidedModel for Mis {
            fn auxiliary(&self, _th: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
                LinearAuxiliary::new(
                    DMatrix::zeros(1, 1),
                    Beta::Constant(DVector::zeros(1)),
                    DMatrix::from_element(1, 1, 1.0),
                    seg.horizon(),
                    seg.v.clone(),
                )
            }
        }
        let err = GuidedBridge::build(Arc::new(Mis), &[], &seg1(0.0, 1.0, 1.0), 5).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn u_sde_brownian_display() {
        let model = scalar_lin(0.0, 0.0, 0.8, 0.0, 0.0);
        let br = GuidedBridge::build(model, &[], &seg1(0.0, 1.0, 2.0), 5).unwrap();
        let u = DVector::from_element(1, 0.7);
        let (drift, scale) = br.u_sde_coefficients(0.5, &u).unwrap();
        assert!((drift[0] + 0.7 / 1.5).abs() < 1e-12);
        assert!((scale[(0, 0)] + (2.0f64 / 2.0).sqrt() / 1.5f64.sqrt() * 0.8).abs() < 1e-12);
        let (drift, _) = br.u_sde_coefficients(0.5, &DVector::zeros(1)).unwrap();
        assert_eq!(drift[0], 0.0);
        assert!(br.u_sde_coefficients(2.0, &u).is_err());
    }

    #[test]
    fn u_sde_near_end() {
        // drift ≈ −(2/T) b(T, v) − U/(T − s) for s close to T
        let model = scalar_lin(-0.5, 1.0, 0.8, 0.0, 0.0);
        let t_end = 2.0;
        let br = GuidedBridge::build(model.clone(), &[], &seg1(0.0, 1.0, t_end), 5).unwrap();
        let s = t_end * (1.0 - 1e-4);
        let u = DVector::from_element(1, 0.3);
        let (drift, _) = br.u_sde_coefficients(s, &u).unwrap();
        let approx = -(2.0 / t_end) * model.drift(t_end, &DVector::from_element(1, 1.0), &[])[0] - 0.3 / (t_end - s);
        assert!((drift[0] - approx).abs() <= 0.01 * approx.abs());
    }

    #[test]
    fn noiseless_solve_rests_at_start() {
        // σ = 0 with a unit auxiliary noise (ã must stay invertible)
        struct Quiet;
        impl DiffusionModel for Quiet {
            fn state_dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                1
            }
            fn param_names(&self) -> Vec<String> {
                vec![]
            }
            fn drift(&self, _t: f64, _x: &DVector<f64>, _th: &[f64]) -> DVector<f64> {
                DVector::zeros(1)
            }
            fn dispersion(&self, _t: f64, _x: &DVector<f64>, _th: &[f64]) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
        }
        impl GuidedModel for Quiet {
            fn auxiliary(&self, _th: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
                LinearAuxiliary::new(
                    DMatrix::zeros(1, 1),
                    Beta::Constant(DVector::zeros(1)),
                    DMatrix::from_element(1, 1, 1.0),
                    seg.horizon(),
                    seg.v.clone(),
                )
            }
            fn matching(&self) -> Matching {
                Matching::Approximate { rel_tol: 0.1 }
            }
        }
        let (u0, v, t_end, m) = (1.0, 3.0, 2.0, 11);
        let br = GuidedBridge::build(Arc::new(Quiet), &[], &seg1(u0, v, t_end), m).unwrap();
        let z = sample_wiener(br.ctx().s_grid(), 1, &mut Substreams::new(1).stream(&[]));
        let up = br.solve_g(&z).unwrap();
        let s = br.ctx().s_grid().points();
        // a = 0 removes the guiding term: U grows like 1/(T − s) and X stays
        // within O(Δs²) of u until Γ pins the end
        let mut u = (v - u0) / t_end;
        for j in 0..m - 1 {
            assert!((up.u()[(0, j)] - u).abs() < 1e-12 * u.abs(), "j={j}");
            let x = up.x().state(j)[0];
            assert!((x - (v - (t_end - s[j]) * u)).abs() < 1e-12, "j={j}");
            assert!((x - u0).abs() <= (v - u0) * (s[j] / t_end).powi(2) + 1e-12, "j={j}");
            u *= 1.0 + (s[j + 1] - s[j]) / (t_end - s[j]);
        }
        assert_eq!(up.x().last()[0], v);
    }

    #[test]
    fn solve_is_deterministic_and_hits_end() {
        let model = scalar_lin(-0.4, 0.3, 0.7, -1.0, 0.2);
        let br = GuidedBridge::build(model, &[], &seg1(0.2, 1.5, 2.0), 30).unwrap();
        let z = sample_wiener(br.ctx().s_grid(), 1, &mut Substreams::new(2).stream(&[]));
        let a = br.solve_g(&z).unwrap();
        let b = br.solve_g(&z).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x().state(0)[0], 0.2);
        assert_eq!(a.x().last()[0], 1.5);
        let (c, lp) = br.solve_and_weigh(&z).unwrap();
        assert_eq!(a, c);
        assert_eq!(lp, br.log_psi_timechanged(&c).unwrap());
    }

    #[test]
    fn inversion_round_trip() {
        let model = scalar_lin(-0.4, 0.3, 0.7, -1.0, 0.2);
        let br = GuidedBridge::build(model, &[], &seg1(0.2, 1.5, 2.0), 30).unwrap();
        let z = sample_wiener(br.ctx().s_grid(), 1, &mut Substreams::new(3).stream(&[]));
        let up = br.solve_g(&z).unwrap();
        let back = br.invert_g(up.x(), &z.increment(28)).unwrap();
        assert!((back.matrix() - z.matrix()).norm() < 1e-9);
    }

    fn stiff_pair() -> (Arc<dyn GuidedModel>, Segment) {
        let b = DMatrix::from_row_slice(2, 2, &[-5.0, 1.0, 0.5, -0.5]);
        let beta = DVector::from_vec(vec![1.0, -0.2]);
        let model: Arc<dyn GuidedModel> = Arc::new(Lin {
            b: b.clone(),
            beta: beta.clone(),
            sigma: DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.2, 0.4]),
            aux_b: b,
            aux_beta: beta,
        });
        let seg = Segment {
            index: 0,
            t0: 0.0,
            t1: 1.0,
            u: DVector::from_vec(vec![0.5, 2.0]),
            v: DVector::from_vec(vec![3.0, 1.0]),
        };
        (model, seg)
    }

    fn noiseless(model: &Arc<dyn GuidedModel>, seg: &Segment, m: usize, scheme: UScheme) -> UPath {
        let aux = model.auxiliary(&[], seg).unwrap();
        let ctx = BridgeContext::with_scheme(aux, seg.u.clone(), m, scheme).unwrap();
        let br = GuidedBridge::new(model.clone(), vec![], Arc::new(ctx), 0.0).unwrap();
        let z = WienerIncrements::new(br.ctx().s_grid().clone(), DMatrix::zeros(2, m - 1)).unwrap();
        br.solve_g(&z).unwrap()
    }

    /// Mean of the auxiliary bridge from `u` at time `t`, by one propagator.
    fn bridge_mean(model: &Arc<dyn GuidedModel>, seg: &Segment, t: f64) -> DVector<f64> {
        let aux = model.auxiliary(&[], seg).unwrap();
        aux.v_at(t) - aux.bridge_mean_propagator(0.0, t).unwrap() * (aux.v_at(0.0) - &seg.u)
    }

    #[test]
    fn exact_scheme_tracks_bridge_mean_in_few_steps() {
        let (model, seg) = stiff_pair();
        let m = 8;
        let up = noiseless(&model, &seg, m, UScheme::AuxiliaryExact);
        for j in 1..m - 1 {
            let want = bridge_mean(&model, &seg, up.x().times()[j]);
            assert!((up.x().state(j) - &want).norm() < 1e-9, "j={j}");
        }
    }

    #[test]
    fn fine_euler_converges_to_bridge_mean() {
        // first order in 1/m; |U₀| ≈ 420 here so the constant is large
        let (model, seg) = stiff_pair();
        let err = |m: usize| {
            let up = noiseless(&model, &seg, m, UScheme::Euler);
            let j = (m - 1) / 2;
            (up.x().state(j) - bridge_mean(&model, &seg, up.x().times()[j])).norm()
        };
        let (coarse, fine) = (err(1601), err(6401));
        assert!((fine / coarse - 0.25).abs() < 0.02, "{coarse} {fine}");
        assert!(fine < 2e-2);
    }

    #[test]
    fn schemes_coincide_without_linear_drift() {
        let model = scalar_lin(-0.4, 0.3, 0.7, 0.0, 0.2);
        let seg = seg1(0.2, 1.5, 2.0);
        let z = sample_wiener(&TimeGrid::uniform(0.0, 2.0, 25).unwrap(), 1, &mut Substreams::new(5).stream(&[]));
        let run = |scheme| {
            let aux = model.auxiliary(&[], &seg).unwrap();
            let ctx = BridgeContext::with_scheme(aux, seg.u.clone(), 25, scheme).unwrap();
            GuidedBridge::new(model.clone(), vec![], Arc::new(ctx), 0.0)
                .unwrap()
                .solve_and_weigh(&z)
                .unwrap()
        };
        assert_eq!(run(UScheme::Euler), run(UScheme::AuxiliaryExact));
    }

    #[test]
    fn time_changed_weights_sum() {
        // a constant integrand c gets weight Σ_j τ'(s_j)Δs, the left sum of ∫τ' = T
        let t_end = 2.0;
        let m = 9;
        let g = TimeGrid::uniform(0.0, t_end, m).unwrap();
        let total: f64 = (0..m - 1).map(|j| tau_prime(g.points()[j], t_end) * g.step(j)).sum();
        // left sums of τ' overshoot T by T/(m−1)
        assert!((total - t_end * (1.0 + 1.0 / (m - 1) as f64)).abs() < 1e-12);
    }
}
