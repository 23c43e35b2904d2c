//! Chain state, the three samplers and the driver loop.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::guided::{segments, GuidedBridge, GuidedModel, Segment, UPath};
use crate::linalg::spd_factor;
use crate::rng::{purpose, Substreams};
use crate::sde::{sample_wiener, Observations, WienerIncrements};

use super::conjugate::{accumulate, finish, ConjugateStats};
use super::kernel::{default_alpha, preconditioned_log_ratio, ProposalKernel};
use super::prior::{in_support, log_prior, PriorSpec};

/// Which parameter update follows the innovation update.
#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    /// Metropolis–Hastings on all of `θ` with fixed innovations.
    Innovation { kernel: ProposalKernel },
    /// Optional MH step on the non-drift parameters `γ`, then a Gibbs draw of
    /// the drift parameters `ϑ` from their Gaussian full conditional.
    ConjugateGibbs { gamma_kernel: Option<ProposalKernel> },
    /// Random walk on `ϑ` preconditioned by the path statistic `W`, then an
    /// optional MH step on `γ`.
    Preconditioned {
        alpha: Option<f64>,
        gamma_kernel: Option<ProposalKernel>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub algorithm: Algorithm,
    /// Grid points per segment, end points included.
    pub m: usize,
    pub iterations: usize,
    pub seed: u64,
    pub init: Vec<f64>,
    pub priors: Vec<PriorSpec>,
    /// Resample proposals leaving the model's admissible set.
    pub positivity: bool,
    pub max_attempts: usize,
    pub execution: Execution,
}

impl McmcConfig {
    pub fn new(algorithm: Algorithm, m: usize, iterations: usize, init: Vec<f64>, priors: Vec<PriorSpec>) -> Self {
        Self {
            algorithm,
            m,
            iterations,
            seed: 0,
            init,
            priors,
            positivity: false,
            max_attempts: 1000,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Acceptance {
    pub accepted: u64,
    pub proposed: u64,
}

impl Acceptance {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub innovations: Acceptance,
    pub theta: Acceptance,
    pub gamma: Acceptance,
    pub gibbs: u64,
}

/// Events that do not stop the chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    /// Proposals rejected because a weight or state was not finite.
    pub nonfinite: u64,
    /// Proposals rejected because a bridge could not be built.
    pub proposal_errors: u64,
    /// Updates skipped after `max_attempts` inadmissible proposals.
    pub cap_hits: u64,
    /// Inadmissible proposals that were redrawn.
    pub positivity_resamples: u64,
    /// Parameter proposals outside the prior support.
    pub prior_rejections: u64,
    /// Accepted bridges whose auxiliary misses the matching tolerance.
    pub mismatch_warnings: u64,
    /// Grid points of accepted paths where the diffusion was clamped.
    pub clamped_points: u64,
    /// Preconditioned proposals rejected because `W` was not positive definite.
    pub w_not_pd: u64,
    /// Gibbs draws skipped because the inversion or recomputation failed.
    pub gibbs_skips: u64,
}

impl Flags {
    fn merge(&mut self, o: &Flags) {
        self.nonfinite += o.nonfinite;
        self.proposal_errors += o.proposal_errors;
        self.cap_hits += o.cap_hits;
        self.positivity_resamples += o.positivity_resamples;
        self.prior_rejections += o.prior_rejections;
        self.mismatch_warnings += o.mismatch_warnings;
        self.clamped_points += o.clamped_points;
        self.w_not_pd += o.w_not_pd;
        self.gibbs_skips += o.gibbs_skips;
    }

    fn failure(&mut self, e: &Error) {
        match e {
            Error::NonFinite { .. } => self.nonfinite += 1,
            _ => self.proposal_errors += 1,
        }
    }
}

/// One segment of the chain state with its cached weights.
#[derive(Debug, Clone)]
pub struct SegmentState {
    pub bridge: GuidedBridge,
    pub z: WienerIncrements,
    pub path: UPath,
    pub log_psi: f64,
    pub log_ptilde: f64,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub segments: Vec<SegmentState>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub param_names: Vec<String>,
    /// One row per iteration, the state after that iteration.
    pub trace: Vec<Vec<f64>>,
    /// Log acceptance ratio of the main parameter step at each iteration
    /// (`NaN` when the step was skipped or rejected before evaluation).
    pub log_ratios: Vec<f64>,
    pub counts: Counts,
    pub flags: Flags,
    pub seed: u64,
    pub config: McmcConfig,
}

/// Candidate segment under some parameter: bridge, path and weights.
type Candidate = (GuidedBridge, UPath, f64, f64);

/// Outcome of evaluating all segments under a proposed parameter.
enum Batch {
    Ready(Vec<Candidate>),
    Failed(Flags),
    Inadmissible,
}

pub struct Sampler {
    model: Arc<dyn GuidedModel>,
    segs: Vec<Segment>,
    config: McmcConfig,
    subs: Substreams,
    state: ChainState,
    counts: Counts,
    flags: Flags,
    vartheta: Vec<usize>,
    gamma: Vec<usize>,
}

fn accept(rng: &mut ChaCha8Rng, log_a: f64) -> bool {
    let u: f64 = rng.random();
    log_a.is_finite() && u.ln() < log_a || log_a == f64::INFINITY
}

impl Sampler {
    pub fn new(model: Arc<dyn GuidedModel>, data: &Observations, config: McmcConfig) -> Result<Self> {
        let p = model.param_names().len();
        if config.init.len() != p || config.priors.len() != p {
            return Err(Error::Parameter(format!(
                "model has {p} parameters, got {} initial values and {} priors",
                config.init.len(),
                config.priors.len()
            )));
        }
        for pr in &config.priors {
            pr.validate()?;
        }
        if !in_support(&config.priors, &config.init) {
            return Err(Error::Parameter("initial parameter outside the prior support".into()));
        }
        if config.m < 2 {
            return Err(Error::Parameter("need at least 2 grid points per segment".into()));
        }
        if config.max_attempts == 0 {
            return Err(Error::Parameter("max_attempts must be positive".into()));
        }
        if data.dim() != model.state_dim() {
            return Err(Error::Dimension {
                what: "observation dimension",
                expected: model.state_dim(),
                got: data.dim(),
            });
        }
        let vartheta = model.basis_indices();
        let gamma: Vec<usize> = (0..p).filter(|i| !vartheta.contains(i)).collect();
        match &config.algorithm {
            Algorithm::Innovation { kernel } => kernel.validate(p)?,
            Algorithm::ConjugateGibbs { gamma_kernel } => {
                if vartheta.is_empty() {
                    return Err(Error::Unsupported("model has no drift basis".into()));
                }
                if model.noise_dim() != model.state_dim() {
                    return Err(Error::Unsupported(format!(
                        "the Gibbs update inverts the innovation map and needs a square dispersion, got {}x{}",
                        model.state_dim(),
                        model.noise_dim()
                    )));
                }
                if vartheta.iter().any(|&i| config.priors[i].gaussian_mean().is_none()) {
                    return Err(Error::Unsupported("the Gibbs update needs Gaussian priors on the drift parameters".into()));
                }
                if let Some(k) = gamma_kernel {
                    k.validate(gamma.len())?;
                }
            }
            Algorithm::Preconditioned { alpha, gamma_kernel } => {
                if vartheta.is_empty() {
                    return Err(Error::Unsupported("model has no drift basis".into()));
                }
                if alpha.is_some_and(|a| !(a > 0.0)) {
                    return Err(Error::Parameter("alpha must be positive".into()));
                }
                if let Some(k) = gamma_kernel {
                    k.validate(gamma.len())?;
                }
            }
        }
        let segs = segments(data);
        let subs = Substreams::new(config.seed);
        let theta = config.init.clone();
        let bridges = build_all(&model, &theta, &segs, config.m, config.execution, None)?;
        let exec = config.execution;
        let init: Vec<Result<(SegmentState, Flags)>> = exec.map(segs.len(), |i| {
            let mut rng = subs.stream(&[0, i as u64, purpose::INIT]);
            let br = &bridges[i];
            let mut flags = Flags::default();
            for _ in 0..config.max_attempts {
                let z = sample_wiener(br.ctx().s_grid(), model.noise_dim(), &mut rng);
                let (path, log_psi) = br.solve_and_weigh(&z)?;
                if config.positivity && !br.admissible(&path) {
                    flags.positivity_resamples += 1;
                    continue;
                }
                let log_ptilde = br.log_ptilde()?;
                return Ok((
                    SegmentState {
                        bridge: br.clone(),
                        z,
                        path,
                        log_psi,
                        log_ptilde,
                    },
                    flags,
                ));
            }
            Err(Error::Infeasible(format!(
                "no admissible initial bridge for segment {i} in {} attempts",
                config.max_attempts
            )))
        });
        let mut flags = Flags::default();
        let mut states = Vec::with_capacity(segs.len());
        for r in init {
            let (s, f) = r?;
            flags.merge(&f);
            states.push(s);
        }
        let mut sampler = Self {
            model,
            segs,
            config,
            subs,
            state: ChainState {
                theta,
                segments: states,
            },
            counts: Counts::default(),
            flags,
            vartheta,
            gamma,
        };
        let all: Vec<usize> = (0..sampler.state.segments.len()).collect();
        sampler.note_accepted(&all);
        Ok(sampler)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn flags(&self) -> &Flags {
        &self.flags
    }

    pub fn config(&self) -> &McmcConfig {
        &self.config
    }

    /// Indices of the drift parameters `ϑ` and of the rest `γ`.
    pub fn blocks(&self) -> (&[usize], &[usize]) {
        (&self.vartheta, &self.gamma)
    }

    /// Largest deviation of the cached weights from fresh recomputation.
    pub fn cache_discrepancy(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (seg, st) in self.segs.iter().zip(&self.state.segments) {
            let br = GuidedBridge::build(self.model.clone(), &self.state.theta, seg, self.config.m)?;
            let (path, log_psi) = br.solve_and_weigh(&st.z)?;
            worst = worst
                .max((log_psi - st.log_psi).abs())
                .max((br.log_ptilde()? - st.log_ptilde).abs())
                .max((path.x().states() - st.path.x().states()).abs().max());
        }
        Ok(worst)
    }

    fn note_accepted(&mut self, idx: &[usize]) {
        for &i in idx {
            let st = &self.state.segments[i];
            if st.bridge.mismatch_warning() {
                self.flags.mismatch_warnings += 1;
            }
            let t0 = st.bridge.t0();
            let x = st.path.x();
            self.flags.clamped_points += x
                .times()
                .iter()
                .enumerate()
                .filter(|&(j, &t)| self.model.clamped(t0 + t, &x.state(j), &self.state.theta))
                .count() as u64;
        }
    }

    /// Fresh independent innovations for every segment, each accepted with
    /// probability `min(1, Ψ(g(θ, Z∘))/Ψ(g(θ, Z⋆)))`.
    pub fn update_innovations(&mut self, iter: u64) {
        let (subs, cfg, model) = (self.subs, &self.config, &self.model);
        let cur = &self.state.segments;
        let results: Vec<(Option<(WienerIncrements, UPath, f64)>, Flags)> = cfg.execution.map(cur.len(), |i| {
            let mut rng = subs.stream(&[iter, i as u64, purpose::INNOVATION]);
            let st = &cur[i];
            let mut flags = Flags::default();
            for _ in 0..cfg.max_attempts {
                let z = sample_wiener(st.bridge.ctx().s_grid(), model.noise_dim(), &mut rng);
                match st.bridge.solve_and_weigh(&z) {
                    Err(e) => {
                        flags.failure(&e);
                        return (None, flags);
                    }
                    Ok((path, log_psi)) => {
                        if cfg.positivity && !st.bridge.admissible(&path) {
                            flags.positivity_resamples += 1;
                            continue;
                        }
                        if accept(&mut rng, log_psi - st.log_psi) {
                            return (Some((z, path, log_psi)), flags);
                        }
                        return (None, flags);
                    }
                }
            }
            flags.cap_hits += 1;
            (None, flags)
        });
        let mut accepted = Vec::new();
        for (i, (res, f)) in results.into_iter().enumerate() {
            self.flags.merge(&f);
            let skipped = f.cap_hits > 0 || f.nonfinite > 0 || f.proposal_errors > 0;
            if !skipped {
                self.counts.innovations.record(res.is_some());
            }
            if let Some((z, path, log_psi)) = res {
                let st = &mut self.state.segments[i];
                st.z = z;
                st.path = path;
                st.log_psi = log_psi;
                accepted.push(i);
            }
        }
        self.note_accepted(&accepted);
    }

    /// Bridges and weights of all segments under `theta` with the current
    /// innovations.
    fn evaluate(&self, theta: &[f64]) -> Batch {
        let reuse = if self.model.auxiliary_depends_on_theta() {
            None
        } else {
            Some(&self.state.segments)
        };
        let bridges = match build_all(&self.model, theta, &self.segs, self.config.m, self.config.execution, reuse) {
            Ok(b) => b,
            Err(e) => {
                let mut f = Flags::default();
                f.failure(&e);
                return Batch::Failed(f);
            }
        };
        let cur = &self.state.segments;
        let out: Vec<Result<Candidate>> = self.config.execution.map(cur.len(), |i| {
            let br = &bridges[i];
            let (path, log_psi) = br.solve_and_weigh(&cur[i].z)?;
            let lp = br.log_ptilde()?;
            Ok((br.clone(), path, log_psi, lp))
        });
        let mut cands = Vec::with_capacity(out.len());
        for r in out {
            match r {
                Ok(c) => cands.push(c),
                Err(e) => {
                    let mut f = Flags::default();
                    f.failure(&e);
                    return Batch::Failed(f);
                }
            }
        }
        if self.config.positivity && cands.iter().any(|(br, p, _, _)| !br.admissible(p)) {
            return Batch::Inadmissible;
        }
        Batch::Ready(cands)
    }

    fn log_weight_ratio(&self, cands: &[Candidate]) -> f64 {
        cands
            .iter()
            .zip(&self.state.segments)
            .map(|((_, _, lpsi, lp), st)| (lp - st.log_ptilde) + (lpsi - st.log_psi))
            .sum()
    }

    fn install(&mut self, theta: Vec<f64>, cands: Vec<Candidate>) {
        self.state.theta = theta;
        for (st, (br, path, lpsi, lp)) in self.state.segments.iter_mut().zip(cands) {
            st.bridge = br;
            st.path = path;
            st.log_psi = lpsi;
            st.log_ptilde = lp;
        }
        let all: Vec<usize> = (0..self.state.segments.len()).collect();
        self.note_accepted(&all);
    }

    /// Draw a proposal for the block `idx` with `propose` until all bridges
    /// are admissible; `None` when the proposal is rejected outright.
    fn propose_admissible<F>(&mut self, mut propose: F) -> Option<(Vec<f64>, Vec<Candidate>)>
    where
        F: FnMut() -> Result<Vec<f64>>,
    {
        for _ in 0..self.config.max_attempts {
            let theta = match propose() {
                Ok(t) => t,
                Err(e) => {
                    self.flags.failure(&e);
                    return None;
                }
            };
            if !in_support(&self.config.priors, &theta) {
                self.flags.prior_rejections += 1;
                return None;
            }
            match self.evaluate(&theta) {
                Batch::Ready(c) => return Some((theta, c)),
                Batch::Failed(f) => {
                    self.flags.merge(&f);
                    return None;
                }
                Batch::Inadmissible => self.flags.positivity_resamples += 1,
            }
        }
        self.flags.cap_hits += 1;
        None
    }

    fn block_counter(&mut self, stream: u64) -> &mut Acceptance {
        if stream == purpose::GAMMA {
            &mut self.counts.gamma
        } else {
            &mut self.counts.theta
        }
    }

    /// Metropolis–Hastings step on the block `idx` of `θ` with kernel `q` and
    /// the innovations held fixed. Returns the log acceptance ratio.
    pub fn update_block(&mut self, iter: u64, stream: u64, kernel: &ProposalKernel, idx: &[usize]) -> Option<f64> {
        let mut rng = self.subs.stream(&[iter, stream]);
        let cur_block: Vec<f64> = idx.iter().map(|&i| self.state.theta[i]).collect();
        let base = self.state.theta.clone();
        let mut prop_block = Vec::new();
        let drawn = self.propose_admissible(|| {
            prop_block = kernel.propose(&cur_block, &mut rng)?;
            let mut th = base.clone();
            for (&i, &v) in idx.iter().zip(&prop_block) {
                th[i] = v;
            }
            Ok(th)
        });
        let Some((theta, cands)) = drawn else {
            self.block_counter(stream).proposed += 1;
            return None;
        };
        let log_a = self.log_weight_ratio(&cands)
            + kernel.log_ratio(&cur_block, &prop_block)
            + log_prior(&self.config.priors, &theta)
            - log_prior(&self.config.priors, &self.state.theta);
        let ok = accept(&mut rng, log_a);
        self.block_counter(stream).record(ok);
        if ok {
            self.install(theta, cands);
        }
        Some(log_a)
    }

    /// `(μ, Σ, W)` over all segments' current paths under `theta`.
    pub fn path_stats(&self, theta: &[f64], paths: &[(f64, &UPath)]) -> Result<ConjugateStats> {
        let n = self.vartheta.len();
        let parts: Vec<Result<(DVector<f64>, DMatrix<f64>)>> = self.config.execution.map(paths.len(), |i| {
            let mut mu = DVector::zeros(n);
            let mut sigma = DMatrix::zeros(n, n);
            accumulate(&*self.model, theta, paths[i].0, paths[i].1.x(), &mut mu, &mut sigma)?;
            Ok((mu, sigma))
        });
        let mut mu = DVector::zeros(n);
        let mut sigma = DMatrix::zeros(n, n);
        for p in parts {
            let (m, s) = p?;
            mu += m;
            sigma += s;
        }
        let prec: Vec<f64> = self.vartheta.iter().map(|&i| self.config.priors[i].precision()).collect();
        Ok(finish(mu, sigma, &prec))
    }

    fn current_paths(&self) -> Vec<(f64, &UPath)> {
        self.state.segments.iter().map(|s| (s.bridge.t0(), &s.path)).collect()
    }

    /// Gibbs draw of `ϑ` from `N(W⁻¹(μ + ξ⁻²m₀), W⁻¹)` on the current paths,
    /// followed by recovery of the innovations that keep the paths fixed.
    pub fn update_gibbs(&mut self, iter: u64) {
        let mut rng = self.subs.stream(&[iter, purpose::VARTHETA]);
        let stats = match self.path_stats(&self.state.theta, &self.current_paths()) {
            Ok(s) => s,
            Err(_) => {
                self.flags.gibbs_skips += 1;
                return;
            }
        };
        let Ok((l, _)) = spd_factor(&stats.w, "W", None) else {
            self.flags.w_not_pd += 1;
            self.flags.gibbs_skips += 1;
            return;
        };
        let n = self.vartheta.len();
        let shift = DVector::from_iterator(
            n,
            self.vartheta.iter().map(|&i| {
                let p = &self.config.priors[i];
                p.precision() * p.gaussian_mean().unwrap_or(0.0)
            }),
        );
        let rhs = &stats.mu + shift;
        let lt = l.transpose();
        let Some(y) = l.solve_lower_triangular(&rhs) else {
            self.flags.gibbs_skips += 1;
            return;
        };
        let mean = lt.solve_upper_triangular(&y).unwrap_or_else(|| DVector::zeros(n));
        let xi = DVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)));
        let noise = lt.solve_upper_triangular(&xi).unwrap_or_else(|| DVector::zeros(n));
        let draw = mean + noise;
        let mut theta = self.state.theta.clone();
        for (k, &i) in self.vartheta.iter().enumerate() {
            theta[i] = draw[k];
        }
        let reuse = if self.model.auxiliary_depends_on_theta() {
            None
        } else {
            Some(&self.state.segments)
        };
        let bridges = match build_all(&self.model, &theta, &self.segs, self.config.m, self.config.execution, reuse) {
            Ok(b) => b,
            Err(_) => {
                self.flags.gibbs_skips += 1;
                return;
            }
        };
        let cur = &self.state.segments;
        let out: Vec<Result<(GuidedBridge, WienerIncrements, UPath, f64, f64)>> =
            self.config.execution.map(cur.len(), |i| {
                let br = &bridges[i];
                let z_last = cur[i].z.increment(cur[i].z.len() - 1);
                let z = br.invert_g(cur[i].path.x(), &z_last)?;
                let (path, lpsi) = br.solve_and_weigh(&z)?;
                let lp = br.log_ptilde()?;
                Ok((br.clone(), z, path, lpsi, lp))
            });
        let mut fresh = Vec::with_capacity(out.len());
        for r in out {
            match r {
                Ok(v) => fresh.push(v),
                Err(_) => {
                    self.flags.gibbs_skips += 1;
                    return;
                }
            }
        }
        self.counts.gibbs += 1;
        self.state.theta = theta;
        for (st, (br, z, path, lpsi, lp)) in self.state.segments.iter_mut().zip(fresh) {
            st.bridge = br;
            st.z = z;
            st.path = path;
            st.log_psi = lpsi;
            st.log_ptilde = lp;
        }
        let all: Vec<usize> = (0..self.state.segments.len()).collect();
        self.note_accepted(&all);
    }

    /// Preconditioned random walk `ϑ∘ ~ N(ϑ, α²W_ϑ⁻¹)` with the innovations
    /// held fixed. Returns the log acceptance ratio.
    pub fn update_preconditioned(&mut self, iter: u64, alpha: Option<f64>) -> Option<f64> {
        let mut rng = self.subs.stream(&[iter, purpose::VARTHETA]);
        let n = self.vartheta.len();
        let alpha = alpha.unwrap_or_else(|| default_alpha(n));
        let w = match self.path_stats(&self.state.theta, &self.current_paths()) {
            Ok(s) => s.w,
            Err(e) => {
                self.flags.failure(&e);
                self.flags.w_not_pd += 1;
                self.counts.theta.proposed += 1;
                return None;
            }
        };
        let Ok((l, logdet)) = spd_factor(&w, "W", None) else {
            self.flags.w_not_pd += 1;
            self.counts.theta.proposed += 1;
            return None;
        };
        let lt = l.transpose();
        let base = self.state.theta.clone();
        let vt = self.vartheta.clone();
        let mut delta = DVector::zeros(n);
        let drawn = self.propose_admissible(|| {
            let xi = DVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)));
            delta = lt
                .solve_upper_triangular(&xi)
                .ok_or(Error::Singular { what: "W", time: None })?
                * alpha;
            let mut th = base.clone();
            for (k, &i) in vt.iter().enumerate() {
                th[i] += delta[k];
            }
            Ok(th)
        });
        let Some((theta, cands)) = drawn else {
            self.counts.theta.proposed += 1;
            return None;
        };
        let paths: Vec<(f64, &UPath)> = cands.iter().map(|(br, p, _, _)| (br.t0(), p)).collect();
        let w_new = match self.path_stats(&theta, &paths) {
            Ok(s) => s.w,
            Err(_) => {
                self.flags.w_not_pd += 1;
                self.counts.theta.record(false);
                return None;
            }
        };
        let Ok((_, logdet_new)) = spd_factor(&w_new, "W", None) else {
            self.flags.w_not_pd += 1;
            self.counts.theta.record(false);
            return None;
        };
        let log_q = preconditioned_log_ratio(&delta, &w, logdet, &w_new, logdet_new, alpha);
        let log_a = self.log_weight_ratio(&cands) + log_q + log_prior(&self.config.priors, &theta)
            - log_prior(&self.config.priors, &self.state.theta);
        let ok = accept(&mut rng, log_a);
        self.counts.theta.record(ok);
        if ok {
            self.install(theta, cands);
        }
        Some(log_a)
    }

    /// One full iteration (innovations, then parameters). Returns the log
    /// ratio of the main parameter step, `NaN` if there was none.
    pub fn step(&mut self, iter: u64) -> f64 {
        self.update_innovations(iter);
        let all: Vec<usize> = (0..self.state.theta.len()).collect();
        match self.config.algorithm.clone() {
            Algorithm::Innovation { kernel } => self.update_block(iter, purpose::THETA, &kernel, &all).unwrap_or(f64::NAN),
            Algorithm::ConjugateGibbs { gamma_kernel } => {
                let r = match &gamma_kernel {
                    Some(k) if !self.gamma.is_empty() => {
                        let g = self.gamma.clone();
                        self.update_block(iter, purpose::GAMMA, k, &g).unwrap_or(f64::NAN)
                    }
                    _ => f64::NAN,
                };
                self.update_gibbs(iter);
                r
            }
            Algorithm::Preconditioned { alpha, gamma_kernel } => {
                let r = self.update_preconditioned(iter, alpha).unwrap_or(f64::NAN);
                if let Some(k) = &gamma_kernel {
                    if !self.gamma.is_empty() {
                        let g = self.gamma.clone();
                        self.update_block(iter, purpose::GAMMA, k, &g);
                    }
                }
                r
            }
        }
    }

    /// Run the configured number of iterations.
    pub fn run(mut self) -> ChainOutput {
        let n = self.config.iterations;
        let mut trace = Vec::with_capacity(n);
        let mut log_ratios = Vec::with_capacity(n);
        for it in 1..=n as u64 {
            log_ratios.push(self.step(it));
            trace.push(self.state.theta.clone());
        }
        ChainOutput {
            param_names: self.model.param_names(),
            trace,
            log_ratios,
            counts: self.counts,
            flags: self.flags,
            seed: self.config.seed,
            config: self.config,
        }
    }
}

/// Build every segment's bridge under `theta`, reusing existing contexts when
/// the auxiliary process does not depend on the parameter.
fn build_all(
    model: &Arc<dyn GuidedModel>,
    theta: &[f64],
    segs: &[Segment],
    m: usize,
    exec: Execution,
    reuse: Option<&Vec<SegmentState>>,
) -> Result<Vec<GuidedBridge>> {
    let out: Vec<Result<GuidedBridge>> = exec.map(segs.len(), |i| match reuse {
        Some(cur) => GuidedBridge::new(model.clone(), theta.to_vec(), cur[i].bridge.ctx().clone(), segs[i].t0),
        None => GuidedBridge::build(model.clone(), theta, &segs[i], m),
    });
    out.into_iter().collect()
}

/// Validate, initialise and run a chain.
pub fn run_chain(model: Arc<dyn GuidedModel>, data: &Observations, config: McmcConfig) -> Result<ChainOutput> {
    Ok(Sampler::new(model, data, config)?.run())
}
