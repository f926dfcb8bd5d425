//! Running every (policy, seed) pair of an experiment and writing artifacts.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sparq_core::analysis::RunTrace;
use sparq_core::env::{linspace, BrownianDriftEnv, Environment, GridSeriesEnv, SyntheticRkhsEnv};
use sparq_core::runner::{run_policy, RunOutput};
use sparq_core::{KernelSpec, Point};

use crate::config::{EnvSpec, ExperimentConfig};
use crate::report;

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub variant: String,
    pub seed: u64,
    pub status: String,
    pub final_regret: Option<f64>,
    pub total_queries: Option<usize>,
    pub wall_time_s: Option<f64>,
    pub error: String,
}

impl SummaryRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub rows: Vec<SummaryRow>,
    /// In the same order as the successful rows.
    pub traces: Vec<RunTrace>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }
}

pub fn trace_file_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

/// `(label, seed)` back from a trace file name.
pub fn parse_trace_file_name(name: &str) -> Option<(String, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (label, seed) = stem.rsplit_once("_seed")?;
    (!label.is_empty()).then(|| Some((label.to_string(), seed.parse().ok()?)))?
}

pub fn kernel_for(cfg: &ExperimentConfig, dim: usize) -> anyhow::Result<KernelSpec> {
    Ok(KernelSpec::new(cfg.kernel.amplitude_sq, cfg.kernel.lengthscale, dim)?)
}

/// Environment for one seed together with the shared candidate grid.
pub fn build_environment(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<(Box<dyn Environment>, Vec<Point>)> {
    let line = |d: &[f64; 2]| -> Vec<Point> { linspace(d[0], d[1], cfg.grid_size).into_iter().map(|v| vec![v]).collect() };
    Ok(match &cfg.environment {
        EnvSpec::Synthetic { domain, n_centers, rkhs_bound, time_freq, sigma_sq } => {
            let k = kernel_for(cfg, 1)?;
            let env = SyntheticRkhsEnv::evenly_spaced(domain[0], domain[1], *n_centers, k, *rkhs_bound, *time_freq, *sigma_sq)?;
            (Box::new(env), line(domain))
        }
        EnvSpec::Brownian { domain, step_scale, sigma_sq } => {
            let grid = line(domain);
            let env = BrownianDriftEnv::new(grid.clone(), vec![0.0; grid.len()], *step_scale, *sigma_sq, cfg.horizon, seed)?;
            (Box::new(env), grid)
        }
        EnvSpec::GridSeries { path, sigma_sq } => {
            let env = GridSeriesEnv::from_csv_path(path, *sigma_sq).with_context(|| format!("loading {}", path.display()))?;
            let grid = env.grid().to_vec();
            (Box::new(env), grid)
        }
    })
}

struct Job {
    policy: usize,
    seed: u64,
}

fn run_one(cfg: &ExperimentConfig, job: &Job) -> anyhow::Result<(RunOutput, Box<dyn Environment>, Vec<Point>)> {
    let (env, cands) = build_environment(cfg, job.seed)?;
    let kernel = kernel_for(cfg, env.dim())?;
    let entry = &cfg.policies[job.policy];
    let mut out = run_policy(env.as_ref(), &entry.config, &kernel, &cands, cfg.horizon, job.seed)?;
    out.trace.label = entry.label.clone();
    Ok((out, env, cands))
}

fn write_prediction(path: &Path, env: &dyn Environment, cands: &[Point], mean: &[f64], t: usize) -> anyhow::Result<()> {
    let d = cands.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["g".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.extend(["mean", "truth", "sq_error"].map(String::from));
    w.write_record(&header)?;
    for (g, (x, m)) in cands.iter().zip(mean).enumerate() {
        let truth = env.true_value(x, t);
        let mut row = vec![g.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.extend([m.to_string(), truth.to_string(), ((m - truth) * (m - truth)).to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (policy, seed) pair on a pool of `cfg.threads` workers and
/// writes traces, the summary and the aggregated curves. Results are merged
/// in (policy, seed) order whatever the scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    let out_dir = cfg.resolved_output_dir();
    let trace_dir = out_dir.join("traces");
    std::fs::create_dir_all(&trace_dir).with_context(|| format!("creating {}", trace_dir.display()))?;
    let grid_series = matches!(cfg.environment, EnvSpec::GridSeries { .. });
    let pred_dir = out_dir.join("pred");
    if grid_series {
        std::fs::create_dir_all(&pred_dir)?;
    }
    let jobs: Vec<Job> = (0..cfg.policies.len())
        .flat_map(|policy| cfg.seed_list().into_iter().map(move |seed| Job { policy, seed }))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let results: Vec<(SummaryRow, Option<RunTrace>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let entry = &cfg.policies[job.policy];
                let mut row = SummaryRow {
                    label: entry.label.clone(),
                    variant: entry.config.variant.to_string(),
                    seed: job.seed,
                    status: "ok".into(),
                    final_regret: None,
                    total_queries: None,
                    wall_time_s: None,
                    error: String::new(),
                };
                let outcome = run_one(cfg, job).and_then(|(out, env, cands)| {
                    out.trace.write_csv_path(&trace_dir.join(trace_file_name(&entry.label, job.seed)))?;
                    if grid_series {
                        let path = pred_dir.join(trace_file_name(&entry.label, job.seed));
                        write_prediction(&path, env.as_ref(), &cands, &out.final_mean, cfg.horizon)?;
                    }
                    Ok(out)
                });
                match outcome {
                    Ok(out) => {
                        row.final_regret = Some(out.trace.final_regret());
                        row.total_queries = Some(out.trace.total_queries());
                        row.wall_time_s = Some(out.trace.wall_time_s);
                        log::info!("{} seed {}: R_T = {:.4}, N_T = {}", entry.label, job.seed, out.trace.final_regret(), out.trace.total_queries());
                        (row, Some(out.trace))
                    }
                    Err(e) => {
                        log::error!("{} seed {} failed: {e:#}", entry.label, job.seed);
                        row.status = "failed".into();
                        row.error = format!("{e:#}");
                        (row, None)
                    }
                }
            })
            .collect()
    });
    let (rows, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let traces: Vec<RunTrace> = traces.into_iter().flatten().collect();

    let mut w = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    report::write_curves(&out_dir.join("curves.csv"), &report::aggregate(&traces))?;
    if cfg.plots {
        report::plot_regret(&out_dir.join("regret.svg"), &report::aggregate(&traces), &cfg.name)?;
    }
    Ok(ExperimentReport { output_dir: out_dir, rows, traces })
}

pub fn read_summary(path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_names_round_trip() {
        assert_eq!(parse_trace_file_name(&trace_file_name("W_SPARQ", 12)), Some(("W_SPARQ".into(), 12)));
        assert_eq!(parse_trace_file_name("a_seed_seed3.csv"), Some(("a_seed".into(), 3)));
        assert_eq!(parse_trace_file_name("notes.txt"), None);
        assert_eq!(parse_trace_file_name("_seed3.csv"), None);
        assert_eq!(parse_trace_file_name("x_seedz.csv"), None);
    }
}
