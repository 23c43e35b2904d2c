//! Reaction networks, their chemical Langevin approximation
//! `dX = S(θ∘h(X))dt + S diag(√(θ∘h(X))) dW`, hazard linearisation for the
//! auxiliary process, and exact (Gillespie) simulation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::guided::{GuidedModel, Matching, Segment};
use crate::linproc::{Beta, LinearAuxiliary};
use crate::sde::{DiffusionModel, Observations};

/// Unscaled hazard `h_k(x)` of one reaction.
#[derive(Debug, Clone, PartialEq)]
pub enum Hazard {
    /// `c + u'x`.
    Affine { c: f64, u: Vec<f64> },
    /// `x_i x_j`.
    Product(usize, usize),
    /// `x_i(x_i − 1)/2`.
    Dimer(usize),
}

impl Hazard {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Hazard::Affine { c, u } => c + u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
            Hazard::Product(i, j) => x[*i] * x[*j],
            Hazard::Dimer(i) => 0.5 * x[*i] * (x[*i] - 1.0),
        }
    }

    /// State indices a nonlinear hazard is regressed on.
    fn regressors(&self) -> Vec<usize> {
        match self {
            Hazard::Affine { .. } => Vec::new(),
            Hazard::Product(i, j) if i == j => vec![*i],
            Hazard::Product(i, j) => vec![*i, *j],
            Hazard::Dimer(i) => vec![*i],
        }
    }
}

/// Stoichiometry `S` (d × K) with one hazard per reaction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub stoichiometry: DMatrix<f64>,
    pub hazards: Vec<Hazard>,
}

impl ReactionNetwork {
    pub fn new(stoichiometry: DMatrix<f64>, hazards: Vec<Hazard>) -> Result<Self> {
        if stoichiometry.ncols() != hazards.len() {
            return Err(Error::Dimension {
                what: "number of hazards",
                expected: stoichiometry.ncols(),
                got: hazards.len(),
            });
        }
        if stoichiometry.iter().any(|s| s.fract() != 0.0) {
            return Err(Error::Parameter("stoichiometry must be integer valued".into()));
        }
        let d = stoichiometry.nrows();
        for h in &hazards {
            let bad = match h {
                Hazard::Affine { u, .. } => u.len() != d,
                Hazard::Product(i, j) => *i >= d || *j >= d,
                Hazard::Dimer(i) => *i >= d,
            };
            if bad {
                return Err(Error::Parameter(format!("hazard {h:?} does not fit {d} species")));
            }
        }
        Ok(Self {
            stoichiometry,
            hazards,
        })
    }

    pub fn species(&self) -> usize {
        self.stoichiometry.nrows()
    }

    pub fn reactions(&self) -> usize {
        self.hazards.len()
    }

    /// `h(x)` without rate constants.
    pub fn hazard_basis(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.reactions(), self.hazards.iter().map(|h| h.eval(x)))
    }

    /// `θ ∘ h(x)`.
    pub fn rates(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        self.hazard_basis(x).component_mul(&DVector::from_column_slice(theta))
    }
}

/// Auto-regulatory gene network of a prokaryote with species
/// (RNA, P, P₂, DNA) and DNA + DNA·P₂ conserved at `k_dna`.
pub fn prokaryotic_network(k_dna: f64) -> ReactionNetwork {
    #[rustfmt::skip]
    let s = DMatrix::from_row_slice(4, 8, &[
        0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, 0.0, 1.0, -2.0, 2.0, 0.0, -1.0,
        -1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0,
        -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    let e = |i: usize| {
        let mut u = vec![0.0; 4];
        u[i] = 1.0;
        u
    };
    let hazards = vec![
        Hazard::Product(2, 3),
        Hazard::Affine {
            c: k_dna,
            u: vec![0.0, 0.0, 0.0, -1.0],
        },
        Hazard::Affine { c: 0.0, u: e(3) },
        Hazard::Affine { c: 0.0, u: e(0) },
        Hazard::Dimer(1),
        Hazard::Affine { c: 0.0, u: e(2) },
        Hazard::Affine { c: 0.0, u: e(0) },
        Hazard::Affine { c: 0.0, u: e(1) },
    ];
    ReactionNetwork::new(s, hazards).expect("static network is consistent")
}

/// Rates used to generate the prokaryotic data sets.
pub const PROKARYOTIC_RATES: [f64; 8] = [0.1, 0.7, 0.35, 0.2, 0.1, 0.9, 0.3, 0.1];

/// Affine surrogate `h̃(x) = c + Ux` of the hazard basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardLinearization {
    pub c: DVector<f64>,
    /// K × d.
    pub u: DMatrix<f64>,
}

impl HazardLinearization {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c + &self.u * x
    }

    /// `(B̃_θ, β̃_θ)` with `B̃_θ x + β̃_θ = S(θ ∘ h̃(x))`.
    pub fn drift(&self, net: &ReactionNetwork, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let st = &net.stoichiometry * DMatrix::from_diagonal(&DVector::from_column_slice(theta));
        (&st * &self.u, &st * &self.c)
    }
}

/// Weighted least-squares affine fits of the nonlinear hazards over
/// `design`, with weights equal to the hazard values; affine hazards pass
/// through unchanged. Regressors constant over the (positively weighted)
/// design are dropped; a fit that is still rank deficient is an error.
pub fn linearize_hazards(net: &ReactionNetwork, design: &[DVector<f64>]) -> Result<HazardLinearization> {
    let (k, d) = (net.reactions(), net.species());
    let mut c = DVector::zeros(k);
    let mut u = DMatrix::zeros(k, d);
    for (r, h) in net.hazards.iter().enumerate() {
        if let Hazard::Affine { c: c0, u: u0 } = h {
            c[r] = *c0;
            for (j, v) in u0.iter().enumerate() {
                u[(r, j)] = *v;
            }
            continue;
        }
        let pts: Vec<(&DVector<f64>, f64)> = design
            .iter()
            .map(|x| (x, h.eval(x.as_slice())))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        if pts.len() < 2 {
            return Err(Error::RankDeficient { hazard: r });
        }
        let regs: Vec<usize> = h
            .regressors()
            .into_iter()
            .filter(|&j| pts.iter().any(|(x, _)| x[j] != pts[0].0[j]))
            .collect();
        let p = regs.len() + 1;
        let mut a = DMatrix::zeros(pts.len(), p);
        let mut y = DVector::zeros(pts.len());
        for (row, (x, w)) in pts.iter().enumerate() {
            let sw = w.sqrt();
            a[(row, 0)] = sw;
            for (col, &j) in regs.iter().enumerate() {
                a[(row, col + 1)] = sw * x[j];
            }
            y[row] = sw * w;
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            return Err(Error::RankDeficient { hazard: r });
        }
        let coef = svd.solve(&y, 0.0).map_err(|_| Error::RankDeficient { hazard: r })?;
        c[r] = coef[0];
        for (col, &j) in regs.iter().enumerate() {
            u[(r, j)] = coef[col + 1];
        }
    }
    Ok(HazardLinearization { c, u })
}

/// Hazards used for the per-segment auxiliary dispersion
/// `σ̃ = S·diag(√(θ∘h(v)))` at the segment's right endpoint `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndpointHazards {
    /// True hazards `h(v)`, so `ã = a(T, v)` holds exactly.
    #[default]
    Exact,
    /// Linearised hazards `h̃(v)`; `ã` then only approximates `a(T, v)` and
    /// the likelihood ratio loses its normalisation.
    Linearized,
}

/// Chemical Langevin equation of a network, with the linearised auxiliary
/// drift and per-segment constant auxiliary dispersion.
#[derive(Debug, Clone)]
pub struct CleModel {
    net: ReactionNetwork,
    lin: HazardLinearization,
    endpoint: EndpointHazards,
    mismatch_tol: f64,
}

impl CleModel {
    pub fn new(net: ReactionNetwork, lin: HazardLinearization) -> Self {
        Self {
            net,
            lin,
            endpoint: EndpointHazards::default(),
            mismatch_tol: 0.1,
        }
    }

    pub fn with_endpoint_hazards(mut self, endpoint: EndpointHazards) -> Self {
        self.endpoint = endpoint;
        self
    }

    pub fn endpoint_hazards(&self) -> EndpointHazards {
        self.endpoint
    }

    /// Linearise the hazards over the observed states.
    pub fn from_data(net: ReactionNetwork, obs: &Observations) -> Result<Self> {
        let lin = linearize_hazards(&net, &obs.values)?;
        Ok(Self::new(net, lin))
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.net
    }

    pub fn linearization(&self) -> &HazardLinearization {
        &self.lin
    }

    fn sqrt_dispersion(&self, rates: &DVector<f64>) -> DMatrix<f64> {
        let root = rates.map(|r| r.max(0.0).sqrt());
        &self.net.stoichiometry * DMatrix::from_diagonal(&root)
    }
}

impl DiffusionModel for CleModel {
    fn state_dim(&self) -> usize {
        self.net.species()
    }

    fn noise_dim(&self) -> usize {
        self.net.reactions()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.net.reactions()).map(|i| format!("theta{i}")).collect()
    }

    fn drift(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> DVector<f64> {
        &self.net.stoichiometry * self.net.rates(theta, x.as_slice())
    }

    fn dispersion(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        self.sqrt_dispersion(&self.net.rates(theta, x.as_slice()))
    }

    fn diffusion(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let rates = self.net.rates(theta, x.as_slice()).map(|r| r.max(0.0));
        let s = &self.net.stoichiometry;
        s * DMatrix::from_diagonal(&rates) * s.transpose()
    }

    fn clamped(&self, _t: f64, x: &DVector<f64>, theta: &[f64]) -> bool {
        self.net.rates(theta, x.as_slice()).iter().any(|&r| r < 0.0)
    }
}

impl GuidedModel for CleModel {
    fn auxiliary(&self, theta: &[f64], seg: &Segment) -> Result<LinearAuxiliary> {
        let (b, beta) = self.lin.drift(&self.net, theta);
        let rates = match self.endpoint {
            EndpointHazards::Exact => self.net.rates(theta, seg.v.as_slice()),
            EndpointHazards::Linearized => self.lin.eval(&seg.v).component_mul(&DVector::from_column_slice(theta)),
        };
        let sigma = self.sqrt_dispersion(&rates);
        LinearAuxiliary::new(b, Beta::Constant(beta), sigma, seg.horizon(), seg.v.clone())
    }

    fn matching(&self) -> Matching {
        Matching::Approximate {
            rel_tol: self.mismatch_tol,
        }
    }

    fn drift_basis(&self, _t: f64, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let h = self.net.hazard_basis(x.as_slice());
        Some(&self.net.stoichiometry * DMatrix::from_diagonal(&h))
    }

    fn basis_indices(&self) -> Vec<usize> {
        (0..self.net.reactions()).collect()
    }

    fn nonnegative(&self) -> bool {
        true
    }

    /// Species counts and every hazard basis value nonnegative; the latter
    /// covers species implied by conservation laws (e.g. `K − x₄`).
    fn admissible(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v >= 0.0) && self.net.hazard_basis(x).iter().all(|&h| h >= 0.0)
    }
}

/// Outcome of an exact jump-process simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SsaRun {
    /// States at the requested times.
    pub snapshots: Observations,
    /// Number of reaction events up to the last requested time.
    pub events: usize,
}

/// Gillespie's direct method, recording the state at each of `times`
/// (increasing, the first at or after 0).
pub fn ssa_simulate<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    theta: &[f64],
    x0: &[i64],
    times: &[f64],
    rng: &mut R,
) -> Result<SsaRun> {
    if x0.len() != net.species() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: net.species(),
            got: x0.len(),
        });
    }
    let mut x: Vec<f64> = x0.iter().map(|&v| v as f64).collect();
    if net.rates(theta, &x).iter().any(|&r| r < 0.0) {
        return Err(Error::Domain(format!("negative hazard at initial state {x0:?}")));
    }
    let mut t = 0.0;
    let mut events = 0;
    let mut values = Vec::with_capacity(times.len());
    for &target in times {
        loop {
            let rates = net.rates(theta, &x);
            let total: f64 = rates.iter().map(|r| r.max(0.0)).sum();
            if total <= 0.0 {
                t = f64::INFINITY;
                break;
            }
            let wait = -(1.0 - rng.random::<f64>()).ln() / total;
            if t + wait > target {
                // memorylessness: restart the clock at the snapshot
                t = target;
                break;
            }
            t += wait;
            let mut pick = rng.random::<f64>() * total;
            let mut k = rates.len() - 1;
            for (i, r) in rates.iter().enumerate() {
                let r = r.max(0.0);
                if pick < r {
                    k = i;
                    break;
                }
                pick -= r;
            }
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += net.stoichiometry[(i, k)];
            }
            events += 1;
        }
        values.push(DVector::from_column_slice(&x));
        if t.is_infinite() {
            t = target;
        }
    }
    Ok(SsaRun {
        snapshots: Observations::new(times.to_vec(), values)?,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Substreams;

    fn example_network() -> ReactionNetwork {
        #[rustfmt::skip]
        let s = DMatrix::from_row_slice(3, 4, &[
            1.0, -1.0, -1.0, 0.0,
            0.0, 1.0, -1.0, 0.0,
            0.0, 0.0, 1.0, -2.0,
        ]);
        ReactionNetwork::new(
            s,
            vec![
                Hazard::Affine { c: 1.0, u: vec![0.0; 3] },
                Hazard::Affine { c: 0.0, u: vec![1.0, 0.0, 0.0] },
                Hazard::Product(0, 1),
                Hazard::Dimer(2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn small_network_drift() {
        let net = example_network();
        let lin = HazardLinearization {
            c: DVector::zeros(4),
            u: DMatrix::zeros(4, 3),
        };
        let m = CleModel::new(net, lin);
        let x = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        let b = m.drift(0.0, &x, &[1.0; 4]);
        assert_eq!(b.as_slice(), &[-1.0, 0.0, -1.0]);
        assert_eq!(m.drift(0.0, &x, &[0.0; 4]).norm(), 0.0);
        assert_eq!(m.dispersion(0.0, &x, &[0.0; 4]).norm(), 0.0);
    }

    #[test]
    fn diffusion_symmetric_psd() {
        let net = prokaryotic_network(10.0);
        let lin = linearize_hazards(&net, &[DVector::from_vec(vec![1.0, 5.0, 2.0, 3.0]), DVector::from_vec(vec![4.0, 9.0, 6.0, 7.0]), DVector::from_vec(vec![2.0, 12.0, 3.0, 5.0])]).unwrap();
        let m = CleModel::new(net, lin);
        let mut rng = Substreams::new(1).stream(&[]);
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(0.0..10.0));
            let a = m.diffusion(0.0, &x, &PROKARYOTIC_RATES);
            let s = m.dispersion(0.0, &x, &PROKARYOTIC_RATES);
            assert!((&a - &s * s.transpose()).norm() < 1e-12);
            assert_eq!(a, a.transpose());
            assert!(a.symmetric_eigenvalues().iter().all(|&e| e > -1e-12));
        }
    }

    #[test]
    fn endpoint_hazards_set_auxiliary_diffusion() {
        use crate::guided::Segment;
        let net = prokaryotic_network(10.0);
        let design = [DVector::from_vec(vec![1.0, 5.0, 2.0, 3.0]), DVector::from_vec(vec![4.0, 9.0, 6.0, 7.0]), DVector::from_vec(vec![2.0, 12.0, 3.0, 5.0])];
        let lin = linearize_hazards(&net, &design).unwrap();
        let seg = Segment {
            index: 0,
            t0: 0.0,
            t1: 1.0,
            u: design[0].clone(),
            v: DVector::from_vec(vec![3.0, 20.0, 4.0, 6.0]),
        };
        let exact = CleModel::new(net.clone(), lin.clone());
        assert_eq!(exact.endpoint_hazards(), EndpointHazards::Exact);
        let a = exact.diffusion(1.0, &seg.v, &PROKARYOTIC_RATES);
        let aux = exact.auxiliary(&PROKARYOTIC_RATES, &seg).unwrap();
        assert!((aux.a_tilde() - &a).norm() < 1e-12 * a.norm());
        let approx = CleModel::new(net, lin).with_endpoint_hazards(EndpointHazards::Linearized);
        let aux = approx.auxiliary(&PROKARYOTIC_RATES, &seg).unwrap();
        assert!((aux.a_tilde() - &a).norm() > 1e-3 * a.norm());
    }

    #[test]
    fn prokaryotic_structure() {
        let net = prokaryotic_network(10.0);
        assert_eq!(net.stoichiometry[(1, 4)], -2.0);
        assert_eq!(net.stoichiometry[(3, 0)], -1.0);
        let h = net.hazard_basis(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.as_slice(), &[12.0, 6.0, 4.0, 1.0, 1.0, 3.0, 1.0, 2.0]);
        // reactions 1 and 2 move DNA by ∓1 and leave nothing else but P₂ changed
        assert_eq!(net.stoichiometry[(3, 0)], -1.0);
        assert_eq!(net.stoichiometry[(3, 1)], 1.0);
        for k in 2..8 {
            assert_eq!(net.stoichiometry[(3, k)], 0.0);
        }
    }

    #[test]
    fn affine_hazards_pass_through() {
        let net = prokaryotic_network(10.0);
        let design = vec![DVector::from_vec(vec![1.0, 5.0, 2.0, 3.0]), DVector::from_vec(vec![4.0, 9.0, 6.0, 7.0]), DVector::from_vec(vec![2.0, 12.0, 3.0, 5.0])];
        let lin = linearize_hazards(&net, &design).unwrap();
        assert_eq!(lin.c[1], 10.0);
        assert_eq!(lin.u.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, -1.0]);
        assert_eq!(lin.u.row(3).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(lin.c[3], 0.0);
    }

    #[test]
    fn degenerate_design_is_exact() {
        let net = ReactionNetwork::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            vec![Hazard::Product(0, 1)],
        )
        .unwrap();
        let design: Vec<_> = [1.0, 2.0, 4.0, 7.0].iter().map(|&x| DVector::from_vec(vec![x, 5.0])).collect();
        let lin = linearize_hazards(&net, &design).unwrap();
        assert!(lin.c[0].abs() < 1e-12);
        assert!((lin.u[(0, 0)] - 5.0).abs() < 1e-12);
        assert_eq!(lin.u[(0, 1)], 0.0);

        let single = vec![DVector::from_vec(vec![1.0, 5.0])];
        assert!(matches!(linearize_hazards(&net, &single), Err(Error::RankDeficient { hazard: 0 })));
    }

    #[test]
    fn weighted_fit_matches_normal_equations() {
        // independent oracle: solve (X'WX)β = X'Wy by hand for a dimer hazard
        let net = ReactionNetwork::new(DMatrix::from_row_slice(1, 1, &[-2.0]), vec![Hazard::Dimer(0)]).unwrap();
        let xs = [2.0, 3.0, 5.0, 8.0, 13.0];
        let design: Vec<_> = xs.iter().map(|&x| DVector::from_element(1, x)).collect();
        let lin = linearize_hazards(&net, &design).unwrap();
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &x in &xs {
            let y = 0.5 * x * (x - 1.0);
            let w = y;
            s0 += w;
            s1 += w * x;
            s2 += w * x * x;
            t0 += w * y;
            t1 += w * x * y;
        }
        let det = s0 * s2 - s1 * s1;
        let c = (s2 * t0 - s1 * t1) / det;
        let u = (s0 * t1 - s1 * t0) / det;
        assert!((lin.c[0] - c).abs() < 1e-9 * c.abs());
        assert!((lin.u[(0, 0)] - u).abs() < 1e-9 * u.abs());
    }

    #[test]
    fn ssa_constant_without_rates() {
        let net = prokaryotic_network(10.0);
        let mut rng = Substreams::new(1).stream(&[]);
        let run = ssa_simulate(&net, &[0.0; 8], &[8, 8, 8, 5], &[0.0, 1.0, 2.0], &mut rng).unwrap();
        assert_eq!(run.events, 0);
        assert!(run.snapshots.values.iter().all(|v| v.as_slice() == [8.0, 8.0, 8.0, 5.0]));
    }

    #[test]
    fn ssa_pure_birth_is_poisson() {
        let net = ReactionNetwork::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![Hazard::Affine { c: 1.0, u: vec![0.0] }],
        )
        .unwrap();
        let subs = Substreams::new(2);
        let n = 1000;
        let counts: Vec<f64> = (0..n)
            .map(|r| {
                let run = ssa_simulate(&net, &[1.0], &[0], &[1.0], &mut subs.stream(&[r])).unwrap();
                run.snapshots.values[0][0]
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (1.0 / n as f64).sqrt(), "{mean}");
        // Var of the sample variance for Poisson(1): (μ4 − σ⁴(n−3)/(n−1))/n with μ4 = 4
        assert!((var - 1.0).abs() < 3.0 * (3.0 / n as f64).sqrt(), "{var}");
    }

    #[test]
    fn ssa_birth_death_stationary() {
        // immigration-death: stationary Poisson(λ/μ)
        let net = ReactionNetwork::new(
            DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            vec![Hazard::Affine { c: 1.0, u: vec![0.0] }, Hazard::Affine { c: 0.0, u: vec![1.0] }],
        )
        .unwrap();
        let subs = Substreams::new(3);
        let n = 2000;
        let xs: Vec<f64> = (0..n)
            .map(|r| ssa_simulate(&net, &[4.0, 1.0], &[0], &[20.0], &mut subs.stream(&[r])).unwrap().snapshots.values[0][0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 3.0 * (4.0 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn ssa_prokaryotic_snapshots() {
        let net = prokaryotic_network(10.0);
        let times: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut rng = Substreams::new(4).stream(&[]);
        let run = ssa_simulate(&net, &PROKARYOTIC_RATES, &[8, 8, 8, 5], &times, &mut rng).unwrap();
        assert_eq!(run.snapshots.len(), 50);
        for v in &run.snapshots.values {
            assert!(v.iter().all(|&x| x >= 0.0 && x.fract() == 0.0));
            assert!(v[3] <= 10.0);
        }
    }
}
