//! Time-varying objectives, the noisy observation process and the expert.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gp::{gram, KernelSpec, Point};
use crate::rng::{gaussian, stream_rng, Stream};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment parameters: {0}")]
    Config(String),
    #[error("time step {t} outside supported range 1..={max}")]
    TimeRange { t: usize, max: usize },
    #[error("grid series file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A drifting objective `f_t` over a fixed domain.
///
/// Implementations are deterministic once constructed; observation and
/// expert noise are drawn by the caller from their own streams.
pub trait Environment: Send + Sync {
    fn dim(&self) -> usize;
    /// Noiseless `f_t(x)`.
    fn true_value(&self, x: &[f64], t: usize) -> f64;
    /// Variance of the bandit and expert observation noise.
    fn noise_var(&self) -> f64;
    /// Last supported step, if bounded.
    fn max_time(&self) -> Option<usize> {
        None
    }
}

pub fn check_time<E: Environment + ?Sized>(env: &E, t: usize) -> Result<(), EnvError> {
    match env.max_time() {
        Some(max) if t == 0 || t > max => Err(EnvError::TimeRange { t, max }),
        _ => Ok(()),
    }
}

/// `y = f_t(x) + N(0, σ²)`.
pub fn env_observe<E: Environment + ?Sized, R: Rng + ?Sized>(env: &E, x: &[f64], t: usize, rng: &mut R) -> f64 {
    env.true_value(x, t) + gaussian(rng, env.noise_var())
}

/// Grid argmax of `f_t`; ties go to the lowest index.
pub fn env_optimum<E: Environment + ?Sized>(env: &E, t: usize, candidates: &[Point]) -> (usize, f64) {
    assert!(!candidates.is_empty(), "candidate grid must be non-empty");
    let mut best = (0, env.true_value(&candidates[0], t));
    for (i, x) in candidates.iter().enumerate().skip(1) {
        let v = env.true_value(x, t);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Answers re-queries with fresh noisy evaluations of the current function
/// and counts every point it is asked about.
#[derive(Debug, Clone)]
pub struct ExpertOracle {
    rng: ChaCha8Rng,
    queries: usize,
}

impl ExpertOracle {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, Stream::Expert), queries: 0 }
    }

    pub fn query<E: Environment + ?Sized>(&mut self, env: &E, xs: &[Point], t: usize) -> Vec<f64> {
        self.queries += xs.len();
        xs.iter().map(|x| env_observe(env, x, t, &mut self.rng)).collect()
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

/// `n` evenly spaced points on `[lo, hi]` (including both ends).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Cartesian grid with `per_dim` points per axis on the box `[lo, hi]`.
pub fn uniform_grid(lo: &[f64], hi: &[f64], per_dim: usize) -> Vec<Point> {
    let axes: Vec<Vec<f64>> = lo.iter().zip(hi).map(|(&a, &b)| linspace(a, b, per_dim)).collect();
    let mut out: Vec<Point> = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn nearest(points: &[Point], x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// `f_t(x) = Σ a_i(t)·k(x, c_i)` with `a(t) = (B/λ_max)·u(t)/‖u(t)‖` and
/// `u_i(t) = sin(ω·t + i)`, `i = 1..n`.
#[derive(Debug, Clone)]
pub struct SyntheticRkhsEnv {
    centers: Vec<Point>,
    kernel: KernelSpec,
    norm_bound: f64,
    lambda_max: f64,
    time_freq: f64,
    sigma_sq: f64,
    gram: DMatrix<f64>,
}

impl SyntheticRkhsEnv {
    pub fn new(
        centers: Vec<Point>,
        kernel: KernelSpec,
        norm_bound: f64,
        time_freq: f64,
        sigma_sq: f64,
    ) -> Result<Self, EnvError> {
        kernel.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        if centers.is_empty() {
            return Err(EnvError::Config("at least one center required".into()));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != kernel.dim) {
            return Err(EnvError::Config(format!("center of dimension {} for kernel dimension {}", c.len(), kernel.dim)));
        }
        if !(norm_bound > 0.0) || !(sigma_sq >= 0.0) || !time_freq.is_finite() {
            return Err(EnvError::Config(format!(
                "need B > 0, σ² >= 0 and finite frequency (B={norm_bound}, σ²={sigma_sq}, ω={time_freq})"
            )));
        }
        let gram = gram(&centers, &kernel);
        let lambda_max = gram.clone().symmetric_eigen().eigenvalues.max();
        if lambda_max < 1.0 {
            // once per process: every replicate rebuilds the same environment
            static WARNED: std::sync::Once = std::sync::Once::new();
            WARNED.call_once(|| {
                log::warn!(
                    "λ_max = {lambda_max:.4} < 1: the coefficient scaling bounds ‖f_t‖² by B²/λ_max = {:.4}, above B² = {:.4}",
                    norm_bound * norm_bound / lambda_max,
                    norm_bound * norm_bound
                )
            });
        }
        Ok(Self { centers, kernel, norm_bound, lambda_max, time_freq, sigma_sq, gram })
    }

    /// `n_centers` evenly spaced centers on `[lo, hi]`, one-dimensional.
    pub fn evenly_spaced(
        lo: f64,
        hi: f64,
        n_centers: usize,
        kernel: KernelSpec,
        norm_bound: f64,
        time_freq: f64,
        sigma_sq: f64,
    ) -> Result<Self, EnvError> {
        if kernel.dim != 1 {
            return Err(EnvError::Config("evenly spaced centers need a one-dimensional kernel".into()));
        }
        let centers = linspace(lo, hi, n_centers).into_iter().map(|c| vec![c]).collect();
        Self::new(centers, kernel, norm_bound, time_freq, sigma_sq)
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn coefficients(&self, t: usize) -> Vec<f64> {
        let u: Vec<f64> = (1..=self.centers.len()).map(|i| (self.time_freq * t as f64 + i as f64).sin()).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { self.norm_bound / (self.lambda_max * norm) } else { 0.0 };
        u.into_iter().map(|v| v * scale).collect()
    }

    /// `a(t)ᵀ K_C a(t)`.
    pub fn rkhs_norm_sq(&self, t: usize) -> f64 {
        let a = nalgebra::DVector::from_vec(self.coefficients(t));
        (a.transpose() * &self.gram * &a)[0]
    }
}

impl Environment for SyntheticRkhsEnv {
    fn dim(&self) -> usize {
        self.kernel.dim
    }

    fn true_value(&self, x: &[f64], t: usize) -> f64 {
        self.coefficients(t).iter().zip(&self.centers).map(|(a, c)| a * self.kernel.eval(x, c)).sum()
    }

    fn noise_var(&self) -> f64 {
        self.sigma_sq
    }
}

/// Random-walk drift on a fixed grid: `f_t = f_{t-1} + v_t` with
/// `v_t(x) ~ U(−s, s)` i.i.d. per grid point, where `s` is the step scale.
#[derive(Debug, Clone)]
pub struct BrownianDriftEnv {
    grid: Vec<Point>,
    /// Row `t` holds `f_t` on the grid, `t = 0..=horizon`.
    path: Vec<Vec<f64>>,
    step_scale: f64,
    sigma_sq: f64,
}

impl BrownianDriftEnv {
    pub fn new(
        grid: Vec<Point>,
        initial: Vec<f64>,
        step_scale: f64,
        sigma_sq: f64,
        horizon: usize,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if grid.is_empty() || grid.len() != initial.len() {
            return Err(EnvError::Config(format!("{} grid points but {} initial values", grid.len(), initial.len())));
        }
        let d = grid[0].len();
        if d == 0 || grid.iter().any(|p| p.len() != d) {
            return Err(EnvError::Config("grid points must share one positive dimension".into()));
        }
        if !(step_scale >= 0.0) || !(sigma_sq >= 0.0) {
            return Err(EnvError::Config("step scale and σ² must be non-negative".into()));
        }
        let mut rng = stream_rng(seed, Stream::Environment);
        let mut path = Vec::with_capacity(horizon + 1);
        path.push(initial);
        for t in 1..=horizon {
            let next = path[t - 1].iter().map(|v| v + uniform_increment(&mut rng, step_scale)).collect();
            path.push(next);
        }
        Ok(Self { grid, path, step_scale, sigma_sq })
    }

    pub fn grid(&self) -> &[Point] {
        &self.grid
    }

    pub fn values_at(&self, t: usize) -> &[f64] {
        &self.path[t]
    }

    /// Monte-Carlo estimate of `Var[f_{t2}(x) − f_{t1}(x)]` over `paths`
    /// independent replications of the drift.
    pub fn drift_increment_check(&self, t1: usize, t2: usize, paths: usize, seed: u64) -> f64 {
        drift_increment_variance(self.step_scale, t1, t2, paths, seed)
    }
}

fn uniform_increment<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        rng.random_range(-scale..scale)
    }
}

/// Sample variance of the summed increments between `t1` and `t2`.
pub fn drift_increment_variance(step_scale: f64, t1: usize, t2: usize, paths: usize, seed: u64) -> f64 {
    if t2 <= t1 || paths < 2 {
        return 0.0;
    }
    let mut rng = stream_rng(seed, Stream::Environment);
    let draws: Vec<f64> = (0..paths)
        .map(|_| (t1..t2).map(|_| uniform_increment(&mut rng, step_scale)).sum())
        .collect();
    let mean = draws.iter().sum::<f64>() / paths as f64;
    draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (paths - 1) as f64
}

impl Environment for BrownianDriftEnv {
    fn dim(&self) -> usize {
        self.grid[0].len()
    }

    /// Off-grid points use the nearest grid point. `t = 0` is the initial
    /// state.
    fn true_value(&self, x: &[f64], t: usize) -> f64 {
        self.path[t][nearest(&self.grid, x)]
    }

    fn noise_var(&self) -> f64 {
        self.sigma_sq
    }

    fn max_time(&self) -> Option<usize> {
        Some(self.path.len() - 1)
    }
}

/// Gridded time series loaded from CSV (`t,x1,..,xd,value`). Step `s` of a
/// run maps to the `s`-th distinct `t` in increasing order.
#[derive(Debug, Clone)]
pub struct GridSeriesEnv {
    grid: Vec<Point>,
    times: Vec<i64>,
    /// `values[s-1][g]`.
    values: Vec<Vec<f64>>,
    sigma_sq: f64,
    lookup: HashMap<Vec<u64>, usize>,
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl GridSeriesEnv {
    pub fn new(grid: Vec<Point>, times: Vec<i64>, values: Vec<Vec<f64>>, sigma_sq: f64) -> Result<Self, EnvError> {
        if grid.is_empty() || values.is_empty() || times.len() != values.len() {
            return Err(EnvError::Format("empty grid or time axis".into()));
        }
        if values.iter().any(|row| row.len() != grid.len()) {
            return Err(EnvError::Format("value rows must cover the whole grid".into()));
        }
        if !(sigma_sq >= 0.0) {
            return Err(EnvError::Config(format!("σ² must be non-negative, got {sigma_sq}")));
        }
        let lookup = grid.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        Ok(Self { grid, times, values, sigma_sq, lookup })
    }

    pub fn from_csv_path(path: &Path, sigma_sq: f64) -> Result<Self, EnvError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, sigma_sq)
    }

    /// Parses and validates a complete rectangular grid: every time step
    /// must list exactly the same set of grid points, each once.
    pub fn from_csv_reader<R: Read>(reader: R, sigma_sq: f64) -> Result<Self, EnvError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncol = headers.len();
        if ncol < 3 || &headers[0] != "t" || &headers[ncol - 1] != "value" {
            return Err(EnvError::Format(format!("header must be `t,x1,..,xd,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        for (j, h) in headers.iter().enumerate().take(ncol - 1).skip(1) {
            if h != format!("x{j}") {
                return Err(EnvError::Format(format!("column {} should be `x{j}`, got `{h}`", j + 1)));
            }
        }
        let d = ncol - 2;
        let mut by_time: BTreeMap<i64, Vec<(Point, f64)>> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64, EnvError> {
                rec[j].parse::<f64>().map_err(|e| EnvError::Format(format!("row {}: column {}: {e}", line + 2, j + 1)))
            };
            let t: i64 = rec[0].parse().map_err(|e| EnvError::Format(format!("row {}: time: {e}", line + 2)))?;
            let x: Point = (1..=d).map(parse).collect::<Result<_, _>>()?;
            let v = parse(ncol - 1)?;
            if !v.is_finite() || x.iter().any(|c| !c.is_finite()) {
                return Err(EnvError::Format(format!("row {}: non-finite entry", line + 2)));
            }
            by_time.entry(t).or_default().push((x, v));
        }
        let Some((_, first)) = by_time.iter().next() else {
            return Err(EnvError::Format("no data rows".into()));
        };
        let grid: Vec<Point> = first.iter().map(|(x, _)| x.clone()).collect();
        let index: HashMap<Vec<u64>, usize> = grid.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        if index.len() != grid.len() {
            return Err(EnvError::Format("duplicate grid point in the first time step".into()));
        }
        let mut times = Vec::with_capacity(by_time.len());
        let mut values = Vec::with_capacity(by_time.len());
        for (t, rows) in by_time {
            let mut row = vec![f64::NAN; grid.len()];
            for (x, v) in rows {
                let Some(&g) = index.get(&key(&x)) else {
                    return Err(EnvError::Format(format!("time {t}: point {x:?} not on the grid")));
                };
                if !row[g].is_nan() {
                    return Err(EnvError::Format(format!("time {t}: point {x:?} listed twice")));
                }
                row[g] = v;
            }
            if let Some(g) = row.iter().position(|v| v.is_nan()) {
                return Err(EnvError::Format(format!("time {t}: missing grid point {:?}", grid[g])));
            }
            times.push(t);
            values.push(row);
        }
        Self::new(grid, times, values, sigma_sq)
    }

    pub fn grid(&self) -> &[Point] {
        &self.grid
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t - 1]
    }

    pub fn grid_index(&self, x: &[f64]) -> usize {
        self.lookup.get(&key(x)).copied().unwrap_or_else(|| nearest(&self.grid, x))
    }
}

impl Environment for GridSeriesEnv {
    fn dim(&self) -> usize {
        self.grid[0].len()
    }

    fn true_value(&self, x: &[f64], t: usize) -> f64 {
        self.values[t - 1][self.grid_index(x)]
    }

    fn noise_var(&self) -> f64 {
        self.sigma_sq
    }

    fn max_time(&self) -> Option<usize> {
        Some(self.values.len())
    }
}
