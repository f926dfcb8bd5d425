use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparq_cli::config::{parse_param, ConfigError, ExperimentConfig};
use sparq_cli::diagnostics::{run_adversary, AdversaryRequest, NecessityRequest};
use sparq_cli::experiment::{run_experiment, ExperimentReport};
use sparq_cli::report::{analyze_traces, AnalyzeOptions};
use sparq_cli::sweep::{expand, run_sweep};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "sparq", version, about = "Time-varying GP bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, seed) pair of an experiment.
    Run { config: PathBuf },
    /// Run the experiment once per combination of parameter values.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`; repeatable. Keys are dotted paths such as
        /// `horizon`, `environment.sigma_sq`, `policies.alpha` or
        /// `policies.W_SPARQ.budget_c`.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
    },
    /// Aggregate a folder of trace CSVs.
    Analyze(AnalyzeArgs),
    /// Build the bump family of the lower-bound construction.
    Adversary(AdversaryArgs),
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct AnalyzeArgs {
    dir: PathBuf,
    /// Output folder; defaults to `<dir>/analysis`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.25)]
    alpha_tilde: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Fixed overlay constant instead of fitting at T/2.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 5.0)]
    rkhs_bound: f64,
    #[arg(long)]
    lengthscale: f64,
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    #[arg(long, default_value_t = 50)]
    points_per_cell: usize,
    #[arg(long, default_value = "adversary")]
    out: PathBuf,
    /// Drift exponent for the query-necessity check.
    #[arg(long, requires_all = ["horizon", "queries"])]
    alpha: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    sigma_sq: f64,
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn report_run(tag: &str, r: &ExperimentReport) -> bool {
    let failed = r.failures();
    println!("{tag}{} runs, {} failed -> {}", r.rows.len(), failed, r.output_dir.display());
    for c in sparq_cli::report::aggregate(&r.traces) {
        println!(
            "  {:<12} R_T = {:>10.3}  N_T = {:>8.1}  ({} runs)",
            c.label,
            c.final_regret(),
            c.mean_queries.last().copied().unwrap_or(0.0),
            c.runs
        );
    }
    failed == 0
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome: anyhow::Result<ExitCode> = (|| match cli.command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            println!(
                "ok: {} policies x {} seeds, horizon {}, output {}",
                cfg.policies.len(),
                cfg.seeds,
                cfg.horizon,
                cfg.resolved_output_dir().display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let r = run_experiment(&cfg)?;
            Ok(if report_run("", &r) { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
        }
        Command::Sweep { config, params } => {
            let parsed: Result<Vec<_>, ConfigError> = params.iter().map(|p| parse_param(p)).collect();
            let text = std::fs::read_to_string(&config).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", config.display()));
            let table = text.and_then(|t| t.parse::<toml::Table>().map_err(anyhow::Error::from));
            let base_dir = config.parent().unwrap_or(Path::new(".")).to_path_buf();
            let configs = match (parsed, table) {
                (Ok(p), Ok(t)) => expand(&t, &base_dir, &p).map_err(anyhow::Error::from),
                (Err(e), _) => Err(e.into()),
                (_, Err(e)) => Err(e),
            };
            let configs = match configs {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(EXIT_CONFIG));
                }
            };
            let mut all_ok = true;
            for (tag, r) in run_sweep(&configs)? {
                all_ok &= report_run(&format!("[{tag}] "), &r);
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
        }
        Command::Analyze(a) => {
            let opts = AnalyzeOptions { out_dir: a.out, alpha: a.alpha, alpha_tilde: a.alpha_tilde, delta: a.delta, c: a.c, svg: a.svg };
            let r = analyze_traces(&a.dir, &opts)?;
            println!("{} traces read, {} skipped -> {}", r.traces_read, r.skipped.len(), r.out_dir.display());
            for c in &r.curves {
                let slope = c.late_slope().map_or("-".to_string(), |s| format!("{s:.3}"));
                println!("  {:<12} R_T = {:>10.3}  late slope {slope}  ({} runs)", c.label, c.final_regret(), c.runs);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Adversary(a) => {
            let necessity = match (a.alpha, a.horizon, a.queries) {
                (Some(alpha), Some(horizon), Some(queries)) => Some(NecessityRequest { alpha, horizon, queries, sigma_sq: a.sigma_sq }),
                _ => None,
            };
            let req = AdversaryRequest {
                gamma: a.gamma,
                rkhs_bound: a.rkhs_bound,
                lengthscale: a.lengthscale,
                domain: (a.lo, a.hi),
                points_per_cell: a.points_per_cell,
                necessity,
            };
            match run_adversary(&req, &a.out) {
                Ok(text) => {
                    print!("{text}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    Ok(ExitCode::from(EXIT_CONFIG))
                }
            }
        }
    })();
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
