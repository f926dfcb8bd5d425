//! Single-run harness: one policy, one environment, one seed.

use std::time::Instant;

use thiserror::Error;

use crate::analysis::{RunTrace, StepRecord};
use crate::env::{check_time, env_observe, env_optimum, EnvError, Environment, ExpertOracle};
use crate::gp::{KernelSpec, Point};
use crate::policy::{Agent, PolicyConfig, PolicyError};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("step {t}: {source}")]
    Step { t: usize, source: PolicyError },
}

/// Everything a run produces besides the trace itself.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    /// Queries counted by the expert; equals the trace total.
    pub expert_queries: usize,
    /// Posterior mean on the candidate grid after the final step.
    pub final_mean: Vec<f64>,
}

/// Runs `horizon` steps. The observation noise, expert noise and policy
/// randomness come from separate streams derived from `seed`, so runs of
/// different policies with the same seed see the same bandit noise draws.
pub fn run_policy<E: Environment + ?Sized>(
    env: &E,
    config: &PolicyConfig,
    kernel: &KernelSpec,
    candidates: &[Point],
    horizon: usize,
    seed: u64,
) -> Result<RunOutput, RunError> {
    if kernel.dim != env.dim() {
        return Err(RunError::Env(EnvError::Config(format!(
            "kernel dimension {} does not match environment dimension {}",
            kernel.dim,
            env.dim()
        ))));
    }
    check_time(env, horizon)?;
    let started = Instant::now();
    let mut agent = Agent::new(config.clone(), *kernel, candidates.to_vec(), seed)?;
    let mut obs_rng = stream_rng(seed, Stream::Observation);
    let mut expert = ExpertOracle::new(seed);
    let mut records = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let decision = agent.decide();
        let x = candidates[decision.index].clone();
        let y = env_observe(env, &x, t, &mut obs_rng);
        let f_x = env.true_value(&x, t);
        let (_, f_opt) = env_optimum(env, t, candidates);
        let queries = agent.observe(&x, y, env, &mut expert).map_err(|source| RunError::Step { t, source })?;
        records.push(StepRecord { t, x, y, f_x, f_opt, regret: f_opt - f_x, queries, beta: decision.beta });
    }
    let final_mean = agent.posterior().eval_many(candidates).into_iter().map(|(m, _)| m).collect();
    let trace = RunTrace {
        label: config.variant.to_string(),
        seed,
        records,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { trace, expert_queries: expert.queries(), final_mean })
}
