//! The subcommands: each takes a validated config and writes its files into
//! the output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use gbridge::discretization::study;
use gbridge::exec::Execution;
use gbridge::guided::{segments, GuidedBridge, GuidedModel, Segment};
use gbridge::mcmc::{act_estimate, run_chain, Algorithm, ChainOutput, Flags, McmcConfig};
use gbridge::models::cle::{prokaryotic_network, ssa_simulate, CleModel};
use gbridge::models::{Arctan, LotkaVolterra, ScaledBrownian};
use gbridge::rng::{purpose, Substreams};
use gbridge::sde::{euler_maruyama, sample_wiener, subsample, Observations, TimeGrid};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{AlgorithmId, DataSource, ModelId, RunConfig};
use crate::io::{csv_bytes, fmt_f64, observations_csv, read_observations, read_trace, trace_csv, write_atomic, write_json};

/// Observation times `0, step, 2·step, …` up to `t_end`.
fn observation_times(t_end: f64, step: f64) -> Vec<f64> {
    let n = (t_end / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub model: String,
    pub params: Vec<f64>,
    pub seed: u64,
    pub scheme: String,
    pub fine_points: Option<usize>,
    pub t_end: f64,
    pub step: f64,
    pub x0: Vec<f64>,
    pub observations: usize,
    pub jump_events: Option<usize>,
}

/// Simulate observations as configured.
pub fn simulate_data(cfg: &RunConfig) -> Result<(Observations, Provenance)> {
    let sim = &cfg.simulation;
    let times = observation_times(sim.t_end, sim.step);
    let mut rng = Substreams::new(cfg.seed).stream(&[purpose::SIMULATE]);
    let mut prov = Provenance {
        model: cfg.model.name().into(),
        params: cfg.params.clone(),
        seed: cfg.seed,
        scheme: String::new(),
        fine_points: None,
        t_end: sim.t_end,
        step: sim.step,
        x0: sim.x0.clone(),
        observations: times.len(),
        jump_events: None,
    };
    let obs = if cfg.model == ModelId::Prokaryotic {
        let x0: Vec<i64> = sim.x0.iter().map(|&x| x as i64).collect();
        if x0.iter().zip(&sim.x0).any(|(&i, &x)| i as f64 != x || i < 0) {
            bail!("the jump process needs nonnegative integer initial counts, got {:?}", sim.x0);
        }
        let run = ssa_simulate(&prokaryotic_network(cfg.k_dna), &cfg.params, &x0, &times, &mut rng)?;
        prov.scheme = "ssa".into();
        prov.jump_events = Some(run.events);
        run.snapshots
    } else {
        let model = plain_model(cfg.model);
        let grid = TimeGrid::uniform(0.0, sim.t_end, sim.fine_points)?;
        let w = sample_wiener(&grid, model.noise_dim(), &mut rng);
        let path = euler_maruyama(&*model, &cfg.params, &DVector::from_column_slice(&sim.x0), &grid, &w)?;
        prov.scheme = "euler_maruyama".into();
        prov.fine_points = Some(sim.fine_points);
        subsample(&path, &times).context("observation times must lie on the fine grid")?
    };
    Ok((obs, prov))
}

fn plain_model(id: ModelId) -> Arc<dyn GuidedModel> {
    match id {
        ModelId::Toy => Arc::new(ScaledBrownian::new(1)),
        ModelId::Arctan => Arc::new(Arctan),
        ModelId::LotkaVolterra => Arc::new(LotkaVolterra),
        ModelId::Prokaryotic => unreachable!("the reaction network model is built from data"),
    }
}

/// The model as used for inference on `obs`.
pub fn inference_model(cfg: &RunConfig, obs: &Observations) -> Result<Arc<dyn GuidedModel>> {
    Ok(match cfg.model {
        ModelId::Prokaryotic => Arc::new(CleModel::from_data(prokaryotic_network(cfg.k_dna), obs)?),
        id => plain_model(id),
    })
}

/// Observations from the configured source; simulated data is also written out.
fn load_data(cfg: &RunConfig, out: &Path) -> Result<Observations> {
    match &cfg.data {
        DataSource::File(p) => read_observations(p),
        DataSource::Simulate => {
            let (obs, prov) = simulate_data(cfg)?;
            write_atomic(&out.join("observations.csv"), &observations_csv(&obs)?)?;
            write_json(&out.join("provenance.json"), &prov)?;
            Ok(obs)
        }
    }
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let (obs, prov) = simulate_data(cfg)?;
    let path = out.join("observations.csv");
    write_atomic(&path, &observations_csv(&obs)?)?;
    write_json(&out.join("provenance.json"), &prov)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Integrated autocorrelation time; needs at least 100 draws.
    pub act: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AcceptanceSummary {
    pub bridges: Option<f64>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub gibbs_draws: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FlagSummary {
    pub nonfinite: u64,
    pub proposal_errors: u64,
    pub cap_hits: u64,
    pub positivity_resamples: u64,
    pub prior_rejections: u64,
    pub mismatch_warnings: u64,
    pub clamped_points: u64,
    pub w_not_pd: u64,
    pub gibbs_skips: u64,
}

impl From<&Flags> for FlagSummary {
    fn from(f: &Flags) -> Self {
        Self {
            nonfinite: f.nonfinite,
            proposal_errors: f.proposal_errors,
            cap_hits: f.cap_hits,
            positivity_resamples: f.positivity_resamples,
            prior_rejections: f.prior_rejections,
            mismatch_warnings: f.mismatch_warnings,
            clamped_points: f.clamped_points,
            w_not_pd: f.w_not_pd,
            gibbs_skips: f.gibbs_skips,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub model: String,
    pub algorithm: String,
    pub seed: u64,
    pub m: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    pub parameters: Vec<ParamSummary>,
    pub acceptance: AcceptanceSummary,
    pub flags: FlagSummary,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Mean, standard deviation and ACT of each column.
pub fn summarize(names: &[String], rows: &[(usize, Vec<f64>)]) -> Vec<ParamSummary> {
    let n = rows.len();
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let xs: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            ParamSummary {
                name: name.clone(),
                mean: (n > 0).then_some(mean).and_then(finite),
                sd: (n > 1).then(|| var.sqrt()).and_then(finite),
                act: act_estimate(&xs).ok().map(|a| a.act),
            }
        })
        .collect()
}

/// Rows kept after burn-in and thinning, numbered by iteration (from 1).
pub fn kept_rows(out: &ChainOutput, burn_in: usize, thin: usize) -> Vec<(usize, Vec<f64>)> {
    out.trace
        .iter()
        .enumerate()
        .map(|(k, th)| (k + 1, th))
        .filter(|(i, _)| *i > burn_in && (i - burn_in) % thin == 0)
        .map(|(i, th)| (i, th.clone()))
        .collect()
}

pub fn mcmc_config(cfg: &RunConfig) -> Result<McmcConfig> {
    let algorithm = match cfg.algorithm {
        AlgorithmId::Alg1 => Algorithm::Innovation {
            kernel: cfg.kernel.clone().context("alg1 needs mcmc.kernel")?,
        },
        AlgorithmId::Alg2 => Algorithm::ConjugateGibbs {
            gamma_kernel: cfg.kernel.clone(),
        },
        AlgorithmId::Alg3 => Algorithm::Preconditioned {
            alpha: cfg.alpha,
            gamma_kernel: cfg.kernel.clone(),
        },
    };
    let mut c = McmcConfig::new(algorithm, cfg.m, cfg.iterations, cfg.init.clone(), cfg.priors.clone());
    c.seed = cfg.seed;
    c.positivity = cfg.positivity;
    c.max_attempts = cfg.max_attempts;
    Ok(c)
}

/// Run the chain on already loaded data.
pub fn run_on(cfg: &RunConfig, obs: &Observations) -> Result<(ChainOutput, RunSummary)> {
    let model = inference_model(cfg, obs)?;
    let out = run_chain(model, obs, mcmc_config(cfg)?)?;
    let rows = kept_rows(&out, cfg.burn_in, cfg.thin);
    let summary = RunSummary {
        model: cfg.model.name().into(),
        algorithm: format!("{:?}", cfg.algorithm).to_lowercase(),
        seed: cfg.seed,
        m: cfg.m,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        draws: rows.len(),
        parameters: summarize(&out.param_names, &rows),
        acceptance: AcceptanceSummary {
            bridges: finite(out.counts.innovations.rate()),
            theta: finite(out.counts.theta.rate()),
            gamma: finite(out.counts.gamma.rate()),
            gibbs_draws: out.counts.gibbs,
        },
        flags: (&out.flags).into(),
    };
    Ok((out, summary))
}

pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let obs = load_data(cfg, out_dir)?;
    let (out, summary) = run_on(cfg, &obs)?;
    let rows = kept_rows(&out, cfg.burn_in, cfg.thin);
    write_atomic(&out_dir.join("trace.csv"), &trace_csv(&out.param_names, &rows)?)?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// The segment `bridges` draws from.
fn bridge_segment(cfg: &RunConfig, obs: Option<&Observations>) -> Result<Segment> {
    if let Some(e) = &cfg.bridges.explicit {
        return Ok(Segment {
            index: 0,
            t0: 0.0,
            t1: e.t_end,
            u: DVector::from_column_slice(&e.start),
            v: DVector::from_column_slice(&e.end),
        });
    }
    let obs = obs.context("no data for the bridge segment")?;
    let segs = segments(obs);
    let k = cfg.bridges.segment;
    segs.get(k)
        .cloned()
        .with_context(|| format!("bridges.segment = {k} but the data has {} segments", segs.len()))
}

/// Long-form CSV `sample,s,t,x1..xd` of guided proposals on one segment.
pub fn cmd_bridges(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let needs_data = cfg.bridges.explicit.is_none() || cfg.model == ModelId::Prokaryotic;
    let obs = if needs_data { Some(load_data(cfg, out_dir)?) } else { None };
    let model = match &obs {
        Some(o) => inference_model(cfg, o)?,
        None => plain_model(cfg.model),
    };
    let seg = bridge_segment(cfg, obs.as_ref())?;
    let bridge = GuidedBridge::build(model.clone(), &cfg.params, &seg, cfg.m)?;
    let subs = Substreams::new(cfg.seed);
    let d = model.state_dim();
    let mut header: Vec<String> = ["sample", "s", "t"].map(String::from).to_vec();
    header.extend((1..=d).map(|k| format!("x{k}")));
    let mut rows = Vec::new();
    for n in 0..cfg.bridges.samples {
        let mut rng = subs.stream(&[purpose::SIMULATE, 1, n as u64]);
        let z = sample_wiener(bridge.ctx().s_grid(), model.noise_dim(), &mut rng);
        let up = bridge.solve_g(&z)?;
        for (j, &s) in bridge.ctx().s_grid().points().iter().enumerate() {
            let x = up.x().state(j);
            let mut r = vec![n.to_string(), fmt_f64(s), fmt_f64(seg.t0 + up.x().times()[j])];
            r.extend(x.iter().map(|v| fmt_f64(*v)));
            rows.push(r);
        }
    }
    let path = out_dir.join("bridges.csv");
    write_atomic(&path, &csv_bytes(&header, rows)?)?;
    Ok(path)
}

/// Analytic and Monte Carlo one-step covariance errors for each configured `m`.
pub fn cmd_discretization(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let dc = &cfg.discretization;
    let header: Vec<String> = ["m", "i", "s", "d", "d_prime", "ratio", "mc_d", "mc_d_se", "mc_d_prime", "mc_d_prime_se"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for &m in &dc.m {
        for r in study(dc.t_end, m, dc.replicates, cfg.seed, Execution::default())? {
            rows.push(vec![
                r.m.to_string(),
                r.i.to_string(),
                fmt_f64(r.s),
                fmt_f64(r.d),
                fmt_f64(r.d_prime),
                fmt_f64(r.ratio),
                fmt_f64(r.mc_d),
                fmt_f64(r.mc_d_se),
                fmt_f64(r.mc_d_prime),
                fmt_f64(r.mc_d_prime_se),
            ]);
        }
    }
    let path = out_dir.join("discretization.csv");
    write_atomic(&path, &csv_bytes(&header, rows)?)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Diagnosis {
    pub trace: String,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    pub parameters: Vec<ParamSummary>,
}

/// Summaries of an existing trace, after the configured burn-in and thinning
/// (applied on top of whatever the trace already had).
pub fn cmd_diagnose(trace: &Path, burn_in: usize, thin: usize, out_dir: &Path) -> Result<Diagnosis> {
    let (names, rows) = read_trace(trace)?;
    let rows: Vec<_> = rows
        .into_iter()
        .enumerate()
        .filter(|(k, _)| *k >= burn_in && (k - burn_in) % thin == 0)
        .map(|(_, r)| r)
        .collect();
    let d = Diagnosis {
        trace: trace.display().to_string(),
        burn_in,
        thin,
        draws: rows.len(),
        parameters: summarize(&names, &rows),
    };
    write_json(&out_dir.join("diagnose.json"), &d)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_times_include_end() {
        let t = observation_times(30.0, 0.3);
        assert_eq!(t.len(), 101);
        assert_eq!(t[0], 0.0);
        assert!((t[100] - 30.0).abs() < 1e-12);
        assert_eq!(observation_times(49.0, 1.0).len(), 50);
    }

    #[test]
    fn summary_of_known_columns() {
        let rows: Vec<(usize, Vec<f64>)> = (1..=4).map(|i| (i, vec![i as f64, 2.0])).collect();
        let s = summarize(&["a".into(), "b".into()], &rows);
        assert_eq!(s[0].mean, Some(2.5));
        assert!((s[0].sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s[1].sd, Some(0.0));
        assert_eq!(s[0].act, None);
        let empty = summarize(&["a".into()], &[]);
        assert_eq!((empty[0].mean, empty[0].sd), (None, None));
    }
}
