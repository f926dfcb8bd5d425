//! Sequential policies sharing one select/observe interface: GP-UCB under
//! uncertainty injection, SparQ-GP-UCB, W-SparQ-GP-UCB and the R-, SW-,
//! TV- and W-GP-UCB baselines.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpp::{query_budget, select_subset, DppError};
use crate::env::{Environment, ExpertOracle};
use crate::gp::{fit_posterior, fit_posterior_scaled, Dataset, GpError, KernelSpec, Point, Posterior};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Dpp(#[from] DppError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    GpUcb,
    Sparq,
    WSparq,
    RGpUcb,
    SwGpUcb,
    TvGpUcb,
    WGpUcb,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::GpUcb,
        Variant::Sparq,
        Variant::WSparq,
        Variant::RGpUcb,
        Variant::SwGpUcb,
        Variant::TvGpUcb,
        Variant::WGpUcb,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::GpUcb => "GP_UCB",
            Variant::Sparq => "SPARQ",
            Variant::WSparq => "W_SPARQ",
            Variant::RGpUcb => "R_GP_UCB",
            Variant::SwGpUcb => "SW_GP_UCB",
            Variant::TvGpUcb => "TV_GP_UCB",
            Variant::WGpUcb => "W_GP_UCB",
        }
    }

    /// Whether the variant calls the expert.
    pub fn uses_expert(&self) -> bool {
        matches!(self, Variant::Sparq | Variant::WSparq)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| PolicyError::Config(format!("unknown policy variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub variant: Variant,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    /// RKHS norm bound `B`.
    #[serde(default = "defaults::rkhs_bound")]
    pub rkhs_bound: f64,
    #[serde(default = "defaults::sigma_sq")]
    pub sigma_sq: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::alpha_tilde")]
    pub alpha_tilde: f64,
    /// Constant `c` of the query budget `max(1, ceil(c·(ln t)^d))`.
    #[serde(default = "defaults::budget_c")]
    pub budget_c: f64,
    /// Swap-chain length; `10·n·ln n` when absent.
    #[serde(default)]
    pub dpp_steps: Option<usize>,
    /// Window length for R-GP-UCB (reset period) and SW-GP-UCB.
    #[serde(default = "defaults::window")]
    pub window: usize,
    /// Forgetting rate `ε` of TV-GP-UCB.
    #[serde(default = "defaults::forgetting")]
    pub forgetting: f64,
    /// Per-step weight decay `w` of W-GP-UCB.
    #[serde(default = "defaults::weight_decay")]
    pub weight_decay: f64,
}

mod defaults {
    pub fn delta() -> f64 {
        0.1
    }
    pub fn rkhs_bound() -> f64 {
        5.0
    }
    pub fn sigma_sq() -> f64 {
        0.1
    }
    pub fn alpha() -> f64 {
        1.0
    }
    pub fn alpha_tilde() -> f64 {
        0.25
    }
    pub fn budget_c() -> f64 {
        1.0
    }
    pub fn window() -> usize {
        20
    }
    pub fn forgetting() -> f64 {
        0.05
    }
    pub fn weight_decay() -> f64 {
        0.9
    }
}

impl PolicyConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            delta: defaults::delta(),
            rkhs_bound: defaults::rkhs_bound(),
            sigma_sq: defaults::sigma_sq(),
            alpha: defaults::alpha(),
            alpha_tilde: defaults::alpha_tilde(),
            budget_c: defaults::budget_c(),
            dpp_steps: None,
            window: defaults::window(),
            forgetting: defaults::forgetting(),
            weight_decay: defaults::weight_decay(),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |msg: String| Err(PolicyError::Config(msg));
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("delta must lie in (0, 1], got {}", self.delta));
        }
        if !(self.rkhs_bound >= 0.0 && self.rkhs_bound.is_finite()) {
            return bad(format!("rkhs_bound must be finite and >= 0, got {}", self.rkhs_bound));
        }
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return bad(format!("sigma_sq must be > 0, got {}", self.sigma_sq));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.budget_c > 0.0 && self.budget_c.is_finite()) {
            return bad(format!("budget_c must be > 0, got {}", self.budget_c));
        }
        if self.dpp_steps == Some(0) {
            return bad("dpp_steps must be >= 1".into());
        }
        match self.variant {
            Variant::WSparq => {
                if !(0.0..1.0 / 3.0).contains(&self.alpha_tilde) {
                    return bad(format!("alpha_tilde must lie in [0, 1/3), got {}", self.alpha_tilde));
                }
                if self.alpha <= 0.0 || self.alpha < self.alpha_tilde {
                    return bad(format!(
                        "W_SPARQ needs alpha > 0 and alpha >= alpha_tilde (alpha={}, alpha_tilde={})",
                        self.alpha, self.alpha_tilde
                    ));
                }
            }
            Variant::RGpUcb | Variant::SwGpUcb if self.window == 0 => {
                return bad("window must be >= 1".into());
            }
            Variant::TvGpUcb if !(0.0..=1.0).contains(&self.forgetting) => {
                return bad(format!("forgetting must lie in [0, 1], got {}", self.forgetting));
            }
            Variant::WGpUcb if !(self.weight_decay > 0.0 && self.weight_decay <= 1.0) => {
                return bad(format!("weight_decay must lie in (0, 1], got {}", self.weight_decay));
            }
            _ => {}
        }
        Ok(())
    }
}

/// `(t₂ − t₁)^α`, taken as 0 for a zero gap whatever `α` is.
pub fn drift_factor(gap: usize, alpha: f64) -> f64 {
    if gap == 0 {
        0.0
    } else {
        (gap as f64).powf(alpha)
    }
}

/// Uncertainty-injected variances `σ²(1 + (now − tsᵢ)^α)`.
pub fn assign_noise_vars(timestamps: &[usize], now: usize, alpha: f64, sigma_sq: f64) -> Vec<f64> {
    timestamps
        .iter()
        .map(|&ts| {
            debug_assert!(ts <= now, "timestamp {ts} after now {now}");
            sigma_sq * (1.0 + drift_factor(now.saturating_sub(ts), alpha))
        })
        .collect()
}

/// `β = sqrt(2·(ln(2/δ) + ½·log(|Σ+K|/|Σ|))) + B`.
pub fn beta_schedule(post: &Posterior, delta: f64, rkhs_bound: f64) -> f64 {
    let inner = (2.0 / delta).ln() + 0.5 * post.logdet_ratio();
    (2.0 * inner.max(0.0)).sqrt() + rkhs_bound
}

/// Index of the UCB maximizer over `candidates`; ties go to the lowest index.
pub fn ucb_select(post: &Posterior, beta: f64, candidates: &[Point]) -> (Point, usize) {
    assert!(!candidates.is_empty(), "candidate set must be non-empty");
    let scores = ucb_scores(post, beta, candidates);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    (candidates[best].clone(), best)
}

pub fn ucb_scores(post: &Posterior, beta: f64, candidates: &[Point]) -> Vec<f64> {
    post.eval_many(candidates).into_iter().map(|(m, v)| m + beta * v.sqrt()).collect()
}

/// Window starts `t₁ < t₂ < …` with `t_{j+1} − t_j = floor(t_j^{α̃/α}) + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub starts: Vec<usize>,
}

/// Length of the window opening at `start`.
pub fn window_length(start: usize, alpha: f64, alpha_tilde: f64) -> usize {
    (start as f64).powf(alpha_tilde / alpha).floor() as usize + 1
}

/// All window starts in `[t_start, horizon]`; the last window may run past
/// the horizon and is truncated by the caller.
pub fn plan_windows(alpha: f64, alpha_tilde: f64, t_start: usize, horizon: usize) -> Result<WindowPlan, PolicyError> {
    if !(alpha > 0.0) || !(alpha_tilde >= 0.0) || alpha_tilde > alpha {
        return Err(PolicyError::Config(format!(
            "window plan needs alpha > 0 and 0 <= alpha_tilde <= alpha (alpha={alpha}, alpha_tilde={alpha_tilde})"
        )));
    }
    if t_start == 0 {
        return Err(PolicyError::Config("windows start at t >= 1".into()));
    }
    let mut starts = Vec::new();
    let mut t = t_start;
    while t <= horizon {
        starts.push(t);
        t += window_length(t, alpha, alpha_tilde);
    }
    Ok(WindowPlan { starts })
}

/// Per-run bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct PolicyState {
    /// Last completed step (0 before the first observation).
    pub t: usize,
    /// Data the posterior is fit on (`X^r`, `Y^r`), with refresh timestamps.
    pub regression_data: Dataset,
    /// Most recent expert-refreshed set (`X^s`, `Y^s`).
    pub sparse_data: Dataset,
    /// Distinct inputs chosen so far, the DPP candidates.
    pub all_inputs: Vec<Point>,
    pub window_start: usize,
    pub window_end: usize,
    pub beta_history: Vec<f64>,
    pub queries_spent: usize,
}

/// Decision for the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub index: usize,
    pub beta: f64,
}

/// A configured policy driving one run.
pub struct Agent {
    config: PolicyConfig,
    kernel: KernelSpec,
    candidates: Vec<Point>,
    state: PolicyState,
    posterior: Posterior,
    next_beta: f64,
    rng: ChaCha8Rng,
    /// Kernel matrix over `state.all_inputs`.
    input_gram: DMatrix<f64>,
}

impl Agent {
    pub fn new(config: PolicyConfig, kernel: KernelSpec, candidates: Vec<Point>, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        kernel.validate()?;
        if candidates.is_empty() {
            return Err(PolicyError::Config("candidate grid must be non-empty".into()));
        }
        for c in &candidates {
            kernel.check_point(c)?;
        }
        let posterior = Posterior::prior(&kernel);
        let next_beta = beta_schedule(&posterior, config.delta, config.rkhs_bound);
        let mut state = PolicyState::default();
        if config.variant == Variant::WSparq {
            state.window_start = 1;
            state.window_end = 1 + window_length(1, config.alpha, config.alpha_tilde);
        }
        Ok(Self {
            config,
            kernel,
            candidates,
            state,
            posterior,
            next_beta,
            rng: stream_rng(seed, Stream::Policy),
            input_gram: DMatrix::zeros(0, 0),
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn candidates(&self) -> &[Point] {
        &self.candidates
    }

    /// UCB choice for step `state.t + 1` from the current posterior.
    pub fn decide(&mut self) -> Decision {
        let beta = self.next_beta;
        let (_, index) = ucb_select(&self.posterior, beta, &self.candidates);
        self.state.beta_history.push(beta);
        Decision { index, beta }
    }

    /// Incorporates `(x_t, y_t)` for `t = state.t + 1`, refreshing through
    /// the expert where the variant requires it. Returns the number of
    /// expert queries made at this step.
    pub fn observe<E: Environment + ?Sized>(
        &mut self,
        x: &[f64],
        y: f64,
        env: &E,
        expert: &mut ExpertOracle,
    ) -> Result<usize, PolicyError> {
        self.kernel.check_point(x)?;
        let t = self.state.t + 1;
        self.state.t = t;
        let queries = match self.config.variant {
            Variant::GpUcb => self.step_gp_ucb(x, y, t)?,
            Variant::Sparq => self.step_sparq(x, t, env, expert)?,
            Variant::WSparq => self.step_w_sparq(x, y, t, env, expert)?,
            _ => self.step_baseline(x, y, t)?,
        };
        self.state.queries_spent += queries;
        self.next_beta = beta_schedule(&self.posterior, self.config.delta, self.config.rkhs_bound);
        Ok(queries)
    }

    /// Current noise variances of the regression set as used in the last fit.
    pub fn current_noise_vars(&self) -> Vec<f64> {
        let d = &self.state.regression_data;
        match self.config.variant {
            Variant::GpUcb | Variant::WSparq => assign_noise_vars(&d.timestamps, self.state.t, self.config.alpha, self.config.sigma_sq),
            _ => d.noise_vars.clone(),
        }
    }

    fn step_gp_ucb(&mut self, x: &[f64], y: f64, t: usize) -> Result<usize, PolicyError> {
        let c = &self.config;
        let data = &mut self.state.regression_data;
        data.push(x.to_vec(), y, c.sigma_sq, t);
        data.noise_vars = assign_noise_vars(&data.timestamps, t, c.alpha, c.sigma_sq);
        self.posterior = fit_posterior(data, &self.kernel)?;
        Ok(0)
    }

    fn remember_input(&mut self, x: &[f64]) {
        if self.state.all_inputs.iter().any(|p| p.as_slice() == x) {
            return;
        }
        let n = self.state.all_inputs.len();
        let mut g = std::mem::replace(&mut self.input_gram, DMatrix::zeros(0, 0)).resize(n + 1, n + 1, 0.0);
        for (i, p) in self.state.all_inputs.iter().enumerate() {
            let v = self.kernel.eval(p, x);
            g[(i, n)] = v;
            g[(n, i)] = v;
        }
        g[(n, n)] = self.kernel.amplitude_sq;
        self.input_gram = g;
        self.state.all_inputs.push(x.to_vec());
    }

    /// DPP over the distinct past inputs with budget `Q_t`, then expert
    /// answers at the selected points. Fills `sparse_data` with timestamp `t`.
    fn refresh_sparse_set<E: Environment + ?Sized>(
        &mut self,
        t: usize,
        env: &E,
        expert: &mut ExpertOracle,
    ) -> Result<usize, PolicyError> {
        let n = self.state.all_inputs.len();
        let q = query_budget(t, self.kernel.dim, self.config.budget_c, n);
        let sample = select_subset(&self.input_gram, q, self.config.dpp_steps, &mut self.rng)?;
        let xs: Vec<Point> = sample.indices.iter().map(|&i| self.state.all_inputs[i].clone()).collect();
        let ys = expert.query(env, &xs, t);
        let sparse = &mut self.state.sparse_data;
        sparse.clear();
        for (x, y) in xs.into_iter().zip(ys) {
            sparse.push(x, y, self.config.sigma_sq, t);
        }
        Ok(q)
    }

    fn step_sparq<E: Environment + ?Sized>(
        &mut self,
        x: &[f64],
        t: usize,
        env: &E,
        expert: &mut ExpertOracle,
    ) -> Result<usize, PolicyError> {
        self.remember_input(x);
        let q = self.refresh_sparse_set(t, env, expert)?;
        self.state.regression_data = self.state.sparse_data.clone();
        self.posterior = fit_posterior(&self.state.sparse_data, &self.kernel)?;
        Ok(q)
    }

    fn step_w_sparq<E: Environment + ?Sized>(
        &mut self,
        x: &[f64],
        y: f64,
        t: usize,
        env: &E,
        expert: &mut ExpertOracle,
    ) -> Result<usize, PolicyError> {
        let c = self.config.clone();
        self.remember_input(x);
        if t == self.state.window_end {
            self.state.window_start = t;
            self.state.window_end = t + window_length(t, c.alpha, c.alpha_tilde);
        }
        let queries = if t == self.state.window_start {
            let q = self.refresh_sparse_set(t, env, expert)?;
            self.state.regression_data = self.state.sparse_data.clone();
            q
        } else {
            self.state.regression_data.push(x.to_vec(), y, c.sigma_sq, t);
            0
        };
        let data = &mut self.state.regression_data;
        data.noise_vars = assign_noise_vars(&data.timestamps, t, c.alpha, c.sigma_sq);
        self.posterior = fit_posterior(data, &self.kernel)?;
        Ok(queries)
    }

    fn step_baseline(&mut self, x: &[f64], y: f64, t: usize) -> Result<usize, PolicyError> {
        let c = &self.config;
        let data = &mut self.state.regression_data;
        data.push(x.to_vec(), y, c.sigma_sq, t);
        self.posterior = match c.variant {
            Variant::RGpUcb => {
                // restart at the first step of every block of `window` steps
                if t % c.window == 0 {
                    data.clear();
                }
                fit_posterior(data, &self.kernel)?
            }
            Variant::SwGpUcb => {
                if data.len() > c.window {
                    let drop = data.len() - c.window;
                    data.inputs.drain(..drop);
                    data.outputs.drain(..drop);
                    data.noise_vars.drain(..drop);
                    data.timestamps.drain(..drop);
                }
                fit_posterior(data, &self.kernel)?
            }
            Variant::TvGpUcb => {
                let keep = 1.0 - c.forgetting;
                let ts = &data.timestamps;
                let mut gram = crate::gp::gram(&data.inputs, &self.kernel);
                for i in 0..ts.len() {
                    for j in 0..ts.len() {
                        gram[(i, j)] *= keep.powf(ts[i].abs_diff(ts[j]) as f64 / 2.0);
                    }
                }
                let cross = ts.iter().map(|&ti| keep.powf((t - ti) as f64 / 2.0)).collect();
                fit_posterior_scaled(data, &self.kernel, gram, cross)?
            }
            Variant::WGpUcb => {
                let s: Vec<f64> = data.timestamps.iter().map(|&ti| c.weight_decay.powf((t - ti) as f64 / 2.0)).collect();
                let mut gram = crate::gp::gram(&data.inputs, &self.kernel);
                for i in 0..s.len() {
                    for j in 0..s.len() {
                        gram[(i, j)] *= s[i] * s[j];
                    }
                }
                fit_posterior_scaled(data, &self.kernel, gram, s)?
            }
            _ => unreachable!("not a baseline variant"),
        };
        Ok(0)
    }
}
