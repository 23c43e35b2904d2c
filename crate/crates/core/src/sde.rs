//! Diffusion models, time grids, Wiener increments and Euler–Maruyama
//! simulation of unconditioned SDEs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Strictly increasing sequence of at least two time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite point {p}")));
        }
        if let Some(j) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {j}: {} then {}",
                points[j],
                points[j + 1]
            )));
        }
        Ok(Self { points })
    }

    /// `m` equidistant points from `t0` to `t1`, both included exactly.
    pub fn uniform(t0: f64, t1: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need m >= 2 points, got {m}")));
        }
        if !(t1 > t0) {
            return Err(Error::InvalidGrid(format!("empty interval [{t0}, {t1}]")));
        }
        let h = (t1 - t0) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|j| t0 + j as f64 * h).collect();
        points[m - 1] = t1;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Length of step `j`, i.e. `points[j + 1] - points[j]`.
    pub fn step(&self, j: usize) -> f64 {
        self.points[j + 1] - self.points[j]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }
}

/// Brownian increments on a grid; column `j` holds the increment over step `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    grid: TimeGrid,
    increments: DMatrix<f64>,
}

impl WienerIncrements {
    pub fn new(grid: TimeGrid, increments: DMatrix<f64>) -> Result<Self> {
        if increments.ncols() != grid.len() - 1 {
            return Err(Error::Dimension {
                what: "number of increments",
                expected: grid.len() - 1,
                got: increments.ncols(),
            });
        }
        Ok(Self { grid, increments })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.increments.nrows()
    }

    pub fn len(&self) -> usize {
        self.increments.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.ncols() == 0
    }

    pub fn increment(&self, j: usize) -> DVector<f64> {
        self.increments.column(j).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.increments
    }
}

/// Draw independent `N(0, Δ_j I)` increments of dimension `dim`.
pub fn sample_wiener<R: Rng + ?Sized>(grid: &TimeGrid, dim: usize, rng: &mut R) -> WienerIncrements {
    let n = grid.len() - 1;
    let mut inc = DMatrix::zeros(dim, n);
    for j in 0..n {
        let sd = grid.step(j).sqrt();
        for k in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            inc[(k, j)] = sd * z;
        }
    }
    WienerIncrements {
        grid: grid.clone(),
        increments: inc,
    }
}

/// A parametric diffusion `dX = b(t, X; θ) dt + σ(t, X; θ) dW`.
///
/// `θ` is passed to every call so that one model value serves a whole chain.
pub trait DiffusionModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn drift(&self, t: f64, x: &DVector<f64>, theta: &[f64]) -> DVector<f64>;

    /// `d × d'` dispersion matrix.
    fn dispersion(&self, t: f64, x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64>;

    /// `a = σσ'`.
    fn diffusion(&self, t: f64, x: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let s = self.dispersion(t, x, theta);
        &s * s.transpose()
    }

    /// True when evaluating the dispersion at `x` needed to clamp a negative
    /// argument (e.g. a negative hazard under a square root).
    fn clamped(&self, _t: f64, _x: &DVector<f64>, _theta: &[f64]) -> bool {
        false
    }
}

/// States aligned with a time grid; column `j` is the state at `grid[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    states: DMatrix<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, states: DMatrix<f64>) -> Result<Self> {
        if states.ncols() != grid.len() {
            return Err(Error::Dimension {
                what: "path length",
                expected: grid.len(),
                got: states.ncols(),
            });
        }
        if let Some((j, _)) = states
            .column_iter()
            .enumerate()
            .find(|(_, c)| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                index: j,
                time: grid.points()[j],
                detail: "path state".into(),
            });
        }
        Ok(Self { grid, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn state(&self, j: usize) -> DVector<f64> {
        self.states.column(j).into_owned()
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> DVector<f64> {
        self.state(self.len() - 1)
    }

    /// Join paths end to start; a state shared by two consecutive pieces
    /// (same time) is kept once.
    pub fn concat(pieces: &[Path]) -> Result<Path> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidGrid("no path pieces".into()))?;
        let d = first.dim();
        let mut times = Vec::new();
        let mut cols: Vec<f64> = Vec::new();
        for p in pieces {
            if p.dim() != d {
                return Err(Error::Dimension {
                    what: "path dimension",
                    expected: d,
                    got: p.dim(),
                });
            }
            for (j, &t) in p.times().iter().enumerate() {
                if times.last().is_some_and(|&last: &f64| (t - last).abs() <= 1e-12) {
                    continue;
                }
                times.push(t);
                cols.extend(p.states.column(j).iter());
            }
        }
        let n = times.len();
        Path::new(TimeGrid::new(times)?, DMatrix::from_vec(d, n, cols))
    }
}

/// Discrete observations `x_i = X_{t_i}`; `values[0]` is the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl Observations {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension {
                what: "observation count",
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.len() >= 2 {
            TimeGrid::new(times.clone())?;
        }
        if let Some(d) = values.first().map(|v| v.len()) {
            if let Some(v) = values.iter().find(|v| v.len() != d) {
                return Err(Error::Dimension {
                    what: "observation dimension",
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.values[0]
    }

    /// Same observations with times translated so that the first is 0.
    pub fn shifted(&self) -> Self {
        let t0 = self.times.first().copied().unwrap_or(0.0);
        Self {
            times: self.times.iter().map(|t| t - t0).collect(),
            values: self.values.clone(),
        }
    }
}

/// Euler–Maruyama: `x_{j+1} = x_j + b(t_j, x_j)Δ_j + σ(t_j, x_j) ΔW_j`.
pub fn euler_maruyama(
    model: &dyn DiffusionModel,
    theta: &[f64],
    x0: &DVector<f64>,
    grid: &TimeGrid,
    w: &WienerIncrements,
) -> Result<Path> {
    let d = model.state_dim();
    if x0.len() != d {
        return Err(Error::Dimension {
            what: "initial state",
            expected: d,
            got: x0.len(),
        });
    }
    if w.grid() != grid {
        return Err(Error::InvalidGrid("Wiener increments live on a different grid".into()));
    }
    if w.dim() != model.noise_dim() {
        return Err(Error::Dimension {
            what: "noise dimension",
            expected: model.noise_dim(),
            got: w.dim(),
        });
    }
    let ts = grid.points();
    let mut states = DMatrix::zeros(d, ts.len());
    states.set_column(0, x0);
    let mut x = x0.clone();
    for j in 0..ts.len() - 1 {
        let dt = ts[j + 1] - ts[j];
        let b = model.drift(ts[j], &x, theta);
        let s = model.dispersion(ts[j], &x, theta);
        x += b * dt + s * w.matrix().column(j);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: j + 1,
                time: ts[j + 1],
                detail: format!("Euler state {:?}", x.as_slice()),
            });
        }
        states.set_column(j + 1, &x);
    }
    Path::new(grid.clone(), states)
}

/// Number of grid points of `path` at which the model had to clamp.
pub fn count_clamped(model: &dyn DiffusionModel, theta: &[f64], path: &Path) -> usize {
    (0..path.len())
        .filter(|&j| model.clamped(path.times()[j], &path.state(j), theta))
        .count()
}

/// Extract the states at `times`, each of which must be a grid point of `path`.
pub fn subsample(path: &Path, times: &[f64]) -> Result<Observations> {
    let grid = path.times();
    let mut bad = Vec::new();
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let k = grid.partition_point(|&g| g < t - 1e-12);
        match grid.get(k) {
            Some(&g) if (g - t).abs() <= 1e-12 => values.push(path.state(k)),
            _ => bad.push(t),
        }
    }
    if !bad.is_empty() {
        return Err(Error::TimeNotOnGrid(bad));
    }
    Observations::new(times.to_vec(), values)
}
