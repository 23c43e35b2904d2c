//! Run configuration: flat `key = value` text with dotted sections.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! section.key = value
//! ```
//!
//! Blank lines and `#` comments are ignored, keys are unique, lists are
//! comma separated and distribution specs are a name followed by numbers
//! separated by spaces (`uniform_log -7 7`). Keys and defaults are listed in
//! the README.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use gbridge::mcmc::{PriorSpec, ProposalKernel};
use nalgebra::DMatrix;

/// Models known to the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    Toy,
    Arctan,
    Prokaryotic,
    LotkaVolterra,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::Toy, ModelId::Arctan, ModelId::Prokaryotic, ModelId::LotkaVolterra];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Toy => "toy",
            ModelId::Arctan => "arctan",
            ModelId::Prokaryotic => "prokaryotic",
            ModelId::LotkaVolterra => "lotka_volterra",
        }
    }

    pub fn param_names(self) -> Vec<String> {
        match self {
            ModelId::Toy => vec!["tau".into()],
            ModelId::Arctan => vec!["alpha".into(), "beta".into(), "sigma".into()],
            ModelId::Prokaryotic => (1..=8).map(|k| format!("theta{k}")).collect(),
            ModelId::LotkaVolterra => vec!["theta".into(), "sigma".into()],
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            ModelId::Toy | ModelId::Arctan => 1,
            ModelId::Prokaryotic => 4,
            ModelId::LotkaVolterra => 2,
        }
    }

    fn default_prior(self, k: usize) -> PriorSpec {
        match self {
            ModelId::Toy => PriorSpec::Exponential { rate: 1.0 },
            ModelId::Arctan if k < 2 => PriorSpec::Gaussian { mean: 0.0, variance: 5.0 },
            ModelId::Prokaryotic => PriorSpec::UniformOnLog { lo: -7.0, hi: 7.0 },
            _ => PriorSpec::FlatOnLog,
        }
    }

    fn default_simulation(self) -> Simulation {
        match self {
            ModelId::Toy => Simulation {
                t_end: 1.0,
                step: 1.0,
                fine_points: 2,
                x0: vec![0.0],
            },
            ModelId::Arctan => Simulation {
                t_end: 30.0,
                step: 0.3,
                fine_points: 400_001,
                x0: vec![0.0],
            },
            ModelId::Prokaryotic => Simulation {
                t_end: 49.0,
                step: 1.0,
                fine_points: 0,
                x0: vec![8.0, 8.0, 8.0, 5.0],
            },
            ModelId::LotkaVolterra => Simulation {
                t_end: 10.0,
                step: 1.0,
                fine_points: 10_001,
                x0: vec![0.3f64.ln(), 0.3f64.ln()],
            },
        }
    }
}

impl FromStr for ModelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model '{s}' (expected toy, arctan, prokaryotic or lotka_volterra)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmId {
    Alg1,
    Alg2,
    Alg3,
}

impl AlgorithmId {
    fn name(self) -> &'static str {
        match self {
            AlgorithmId::Alg1 => "alg1",
            AlgorithmId::Alg2 => "alg2",
            AlgorithmId::Alg3 => "alg3",
        }
    }
}

impl FromStr for AlgorithmId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "alg1" => Ok(AlgorithmId::Alg1),
            "alg2" => Ok(AlgorithmId::Alg2),
            "alg3" => Ok(AlgorithmId::Alg3),
            _ => Err(format!("unknown algorithm '{s}' (expected alg1, alg2 or alg3)")),
        }
    }
}

/// Where observations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Simulate,
    File(PathBuf),
}

/// Settings for simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub t_end: f64,
    /// Observation spacing.
    pub step: f64,
    /// Fine Euler grid size including both ends (ignored by the jump process).
    pub fine_points: usize,
    pub x0: Vec<f64>,
}

/// A single segment given explicitly for `bridges`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitSegment {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bridges {
    pub samples: usize,
    /// Segment of the data used when no explicit segment is given.
    pub segment: usize,
    pub explicit: Option<ExplicitSegment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub t_end: f64,
    /// Numbers of Euler steps.
    pub m: Vec<usize>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelId,
    /// Parameter values used for simulation and bridges.
    pub params: Vec<f64>,
    /// Total DNA copies of the prokaryotic network.
    pub k_dna: f64,
    pub seed: u64,
    pub data: DataSource,
    pub simulation: Simulation,
    pub algorithm: AlgorithmId,
    /// Parameter kernel of Algorithm 1, or the `γ` kernel of Algorithms 2 and 3.
    pub kernel: Option<ProposalKernel>,
    /// Step scale of Algorithm 3 (`None`: `2.38/√dim`).
    pub alpha: Option<f64>,
    pub priors: Vec<PriorSpec>,
    /// First iterate of the chain.
    pub init: Vec<f64>,
    pub m: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub positivity: bool,
    pub max_attempts: usize,
    pub output_dir: PathBuf,
    pub bridges: Bridges,
    pub discretization: Discretization,
}

/// Every problem found in a config text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const FIXED_KEYS: &[&str] = &[
    "model.name",
    "model.params",
    "model.k_dna",
    "seed",
    "data.source",
    "data.t_end",
    "data.step",
    "data.fine_points",
    "data.x0",
    "mcmc.algorithm",
    "mcmc.kernel",
    "mcmc.alpha",
    "mcmc.init",
    "mcmc.m",
    "mcmc.iterations",
    "mcmc.burn_in",
    "mcmc.thin",
    "mcmc.positivity",
    "mcmc.max_attempts",
    "prior.all",
    "output.dir",
    "bridges.samples",
    "bridges.segment",
    "bridges.start",
    "bridges.end",
    "bridges.t_end",
    "discretization.t_end",
    "discretization.m",
    "discretization.replicates",
];

fn read_entries(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, (usize, String)> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {}: expected 'key = value', got '{line}'", n + 1));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            errors.push(format!("line {}: empty key", n + 1));
        } else if map.contains_key(&k) {
            errors.push(format!("line {}: duplicate key '{k}'", n + 1));
        } else {
            map.insert(k, (n + 1, v));
        }
    }
    map
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("cannot parse '{}' in list '{s}'", p.trim())))
        .collect()
}

fn numbers(parts: &[&str], n: usize, what: &str) -> Result<Vec<f64>, String> {
    if parts.len() != n {
        return Err(format!("'{what}' takes {n} number(s), got {}", parts.len()));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| format!("cannot parse '{p}' in '{what}'")))
        .collect()
}

/// `gaussian MEAN VAR`, `uniform_log LO HI`, `flat_log` or `exponential RATE`.
pub fn parse_prior(s: &str) -> Result<PriorSpec, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let (name, rest) = parts.split_first().ok_or("empty prior")?;
    let p = match *name {
        "gaussian" => {
            let v = numbers(rest, 2, name)?;
            PriorSpec::Gaussian { mean: v[0], variance: v[1] }
        }
        "uniform_log" => {
            let v = numbers(rest, 2, name)?;
            PriorSpec::UniformOnLog { lo: v[0], hi: v[1] }
        }
        "flat_log" => {
            numbers(rest, 0, name)?;
            PriorSpec::FlatOnLog
        }
        "exponential" => PriorSpec::Exponential {
            rate: numbers(rest, 1, name)?[0],
        },
        _ => return Err(format!("unknown prior '{name}'")),
    };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

pub fn emit_prior(p: &PriorSpec) -> String {
    match p {
        PriorSpec::Gaussian { mean, variance } => format!("gaussian {mean} {variance}"),
        PriorSpec::UniformOnLog { lo, hi } => format!("uniform_log {lo} {hi}"),
        PriorSpec::FlatOnLog => "flat_log".into(),
        PriorSpec::Exponential { rate } => format!("exponential {rate}"),
    }
}

/// `log_uniform W`, `log_gaussian S`, `gamma SHAPE RATE` or `gaussian C11 C12 ..`
/// (row-major covariance).
pub fn parse_kernel(s: &str) -> Result<ProposalKernel, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let (name, rest) = parts.split_first().ok_or("empty kernel")?;
    let (k, dim) = match *name {
        "log_uniform" => (
            ProposalKernel::LogRandomWalkUniform {
                halfwidth: numbers(rest, 1, name)?[0],
            },
            1,
        ),
        "log_gaussian" => (
            ProposalKernel::LogRandomWalkGaussian {
                scale: numbers(rest, 1, name)?[0],
            },
            1,
        ),
        "gamma" => {
            let v = numbers(rest, 2, name)?;
            (ProposalKernel::IndependenceGamma { shape: v[0], rate: v[1] }, 1)
        }
        "gaussian" => {
            let d = (rest.len() as f64).sqrt().round() as usize;
            if d == 0 || d * d != rest.len() {
                return Err(format!("'gaussian' needs a square covariance, got {} numbers", rest.len()));
            }
            let v = numbers(rest, d * d, name)?;
            (
                ProposalKernel::GaussianRW {
                    covariance: DMatrix::from_row_slice(d, d, &v),
                },
                d,
            )
        }
        _ => return Err(format!("unknown kernel '{name}'")),
    };
    k.validate(dim).map_err(|e| e.to_string())?;
    Ok(k)
}

pub fn emit_kernel(k: &ProposalKernel) -> String {
    match k {
        ProposalKernel::LogRandomWalkUniform { halfwidth } => format!("log_uniform {halfwidth}"),
        ProposalKernel::LogRandomWalkGaussian { scale } => format!("log_gaussian {scale}"),
        ProposalKernel::IndependenceGamma { shape, rate } => format!("gamma {shape} {rate}"),
        ProposalKernel::GaussianRW { covariance } => {
            let mut s = "gaussian".to_string();
            for i in 0..covariance.nrows() {
                for j in 0..covariance.ncols() {
                    write!(s, " {}", covariance[(i, j)]).unwrap();
                }
            }
            s
        }
        ProposalKernel::PreconditionedRW { .. } => unreachable!("not a configurable kernel"),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Typed access to the raw entries, recording every error.
struct Reader {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Option<T> {
        let (line, v) = self.map.get(key)?.clone();
        match parse(&v) {
            Ok(t) => Some(t),
            Err(e) => {
                self.errors.push(format!("line {line}: {key}: {e}"));
                None
            }
        }
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Option<T> {
        self.get(key, |v| v.parse::<T>().map_err(|_| format!("cannot parse '{v}'")))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>> {
        self.get(key, parse_list::<T>)
    }

    fn required<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.map.contains_key(key) {
            self.errors.push(format!("missing required key '{key}'"));
        }
        v
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }
}

/// Parse and validate; on failure all problems are reported together.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let map = read_entries(text, &mut errors);
    let mut r = Reader { map, errors };

    let model = r.get("model.name", ModelId::from_str);
    let model = r.required("model.name", model);
    let names = model.map(ModelId::param_names).unwrap_or_default();
    let dim = model.map(ModelId::state_dim);

    let unknown: Vec<String> = r
        .map
        .iter()
        .filter(|(k, _)| {
            if FIXED_KEYS.contains(&k.as_str()) {
                return false;
            }
            match k.strip_prefix("prior.") {
                Some(p) => model.is_some() && !names.iter().any(|n| n == p),
                None => true,
            }
        })
        .map(|(k, (line, _))| format!("line {line}: unknown key '{k}'"))
        .collect();
    r.errors.extend(unknown);

    let params = r.list::<f64>("model.params");
    let params = r.required("model.params", params).unwrap_or_default();
    if model.is_some() && r.map.contains_key("model.params") {
        r.check(params.len() == names.len(), || {
            format!("model.params: expected {} values ({}), got {}", names.len(), names.join(", "), params.len())
        });
    }
    let k_dna = r.value::<f64>("model.k_dna").unwrap_or(10.0);
    r.check(k_dna > 0.0, || format!("model.k_dna must be positive, got {k_dna}"));
    let seed = r.value::<u64>("seed").unwrap_or(0);

    let data = match r.raw("data.source") {
        None | Some("simulate") => DataSource::Simulate,
        Some(p) => DataSource::File(PathBuf::from(p)),
    };
    let sim0 = model.map(ModelId::default_simulation).unwrap_or(Simulation {
        t_end: 1.0,
        step: 1.0,
        fine_points: 2,
        x0: vec![],
    });
    let simulation = Simulation {
        t_end: r.value("data.t_end").unwrap_or(sim0.t_end),
        step: r.value("data.step").unwrap_or(sim0.step),
        fine_points: r.value("data.fine_points").unwrap_or(sim0.fine_points),
        x0: r.list("data.x0").unwrap_or(sim0.x0),
    };
    r.check(simulation.t_end > 0.0 && simulation.step > 0.0, || {
        "data.t_end and data.step must be positive".into()
    });
    if let Some(d) = dim {
        r.check(simulation.x0.len() == d, || {
            format!("data.x0: expected {d} values, got {}", simulation.x0.len())
        });
    }

    let algorithm = r.get("mcmc.algorithm", AlgorithmId::from_str).unwrap_or(AlgorithmId::Alg1);
    let kernel = r.get("mcmc.kernel", parse_kernel);
    if algorithm == AlgorithmId::Alg1 && !r.map.contains_key("mcmc.kernel") {
        r.errors.push("missing required key 'mcmc.kernel' (needed by alg1)".into());
    }
    let alpha = r.value::<f64>("mcmc.alpha");
    if let Some(a) = alpha {
        r.check(a > 0.0 && a.is_finite(), || format!("mcmc.alpha must be positive, got {a}"));
    }
    let all = r.get("prior.all", parse_prior);
    let mut priors = Vec::with_capacity(names.len());
    for (k, n) in names.iter().enumerate() {
        let own = r.get(&format!("prior.{n}"), parse_prior);
        priors.push(own.or_else(|| all.clone()).unwrap_or_else(|| model.unwrap().default_prior(k)));
    }
    let init = r.list::<f64>("mcmc.init").unwrap_or_else(|| params.clone());
    r.check(init.len() == names.len() || model.is_none(), || {
        format!("mcmc.init: expected {} values, got {}", names.len(), init.len())
    });
    let m = r.value::<usize>("mcmc.m").unwrap_or(20);
    r.check(m >= 2, || format!("mcmc.m must be at least 2 (end points included), got {m}"));
    let iterations = r.value("mcmc.iterations").unwrap_or(1000);
    let burn_in = r.value("mcmc.burn_in").unwrap_or(0);
    let thin = r.value::<usize>("mcmc.thin").unwrap_or(1);
    r.check(thin >= 1, || "mcmc.thin must be at least 1".into());
    let positivity = r.value("mcmc.positivity").unwrap_or(model == Some(ModelId::Prokaryotic));
    let max_attempts = r.value::<usize>("mcmc.max_attempts").unwrap_or(1000);
    r.check(max_attempts >= 1, || "mcmc.max_attempts must be at least 1".into());
    let output_dir = PathBuf::from(r.raw("output.dir").unwrap_or("out"));

    let explicit_keys = ["bridges.start", "bridges.end", "bridges.t_end"];
    let given = explicit_keys.iter().filter(|k| r.map.contains_key(**k)).count();
    let explicit = if given == 0 {
        None
    } else {
        r.check(given == 3, || {
            "bridges.start, bridges.end and bridges.t_end must be given together".into()
        });
        let seg = ExplicitSegment {
            start: r.list("bridges.start").unwrap_or_default(),
            end: r.list("bridges.end").unwrap_or_default(),
            t_end: r.value("bridges.t_end").unwrap_or(f64::NAN),
        };
        if let Some(d) = dim {
            r.check(seg.start.len() == d && seg.end.len() == d, || {
                format!("bridges.start and bridges.end need {d} values")
            });
        }
        r.check(seg.t_end > 0.0, || "bridges.t_end must be positive".into());
        Some(seg)
    };
    let bridges = Bridges {
        samples: r.value("bridges.samples").unwrap_or(10),
        segment: r.value("bridges.segment").unwrap_or(0),
        explicit,
    };
    let discretization = Discretization {
        t_end: r.value("discretization.t_end").unwrap_or(1.0),
        m: r.list("discretization.m").unwrap_or_else(|| vec![10]),
        replicates: r.value("discretization.replicates").unwrap_or(100_000),
    };
    r.check(discretization.t_end > 0.0, || "discretization.t_end must be positive".into());
    r.check(discretization.m.iter().all(|&m| m >= 1), || {
        "discretization.m entries must be at least 1".into()
    });

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(RunConfig {
        model: model.unwrap(),
        params,
        k_dna,
        seed,
        data,
        simulation,
        algorithm,
        kernel,
        alpha,
        priors,
        init,
        m,
        iterations,
        burn_in,
        thin,
        positivity,
        max_attempts,
        output_dir,
        bridges,
        discretization,
    })
}

/// Text that parses back to `c`, with every key spelled out.
pub fn emit_config(c: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("model.name", c.model.name().into());
    kv("model.params", join(&c.params));
    kv("model.k_dna", c.k_dna.to_string());
    kv("seed", c.seed.to_string());
    kv(
        "data.source",
        match &c.data {
            DataSource::Simulate => "simulate".into(),
            DataSource::File(p) => p.display().to_string(),
        },
    );
    kv("data.t_end", c.simulation.t_end.to_string());
    kv("data.step", c.simulation.step.to_string());
    kv("data.fine_points", c.simulation.fine_points.to_string());
    kv("data.x0", join(&c.simulation.x0));
    kv("mcmc.algorithm", c.algorithm.name().into());
    if let Some(k) = &c.kernel {
        kv("mcmc.kernel", emit_kernel(k));
    }
    if let Some(a) = c.alpha {
        kv("mcmc.alpha", a.to_string());
    }
    kv("mcmc.init", join(&c.init));
    kv("mcmc.m", c.m.to_string());
    kv("mcmc.iterations", c.iterations.to_string());
    kv("mcmc.burn_in", c.burn_in.to_string());
    kv("mcmc.thin", c.thin.to_string());
    kv("mcmc.positivity", c.positivity.to_string());
    kv("mcmc.max_attempts", c.max_attempts.to_string());
    for (n, p) in c.model.param_names().iter().zip(&c.priors) {
        kv(&format!("prior.{n}"), emit_prior(p));
    }
    kv("output.dir", c.output_dir.display().to_string());
    kv("bridges.samples", c.bridges.samples.to_string());
    kv("bridges.segment", c.bridges.segment.to_string());
    if let Some(e) = &c.bridges.explicit {
        kv("bridges.start", join(&e.start));
        kv("bridges.end", join(&e.end));
        kv("bridges.t_end", e.t_end.to_string());
    }
    kv("discretization.t_end", c.discretization.t_end.to_string());
    kv("discretization.m", join(&c.discretization.m));
    kv("discretization.replicates", c.discretization.replicates.to_string());
    s
}
