//! Experiment configuration: one TOML file per experiment.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparq_core::env::GridSeriesEnv;
use sparq_core::policy::PolicyConfig;
use sparq_core::KernelSpec;
use thiserror::Error;

/// Overrides the root that relative `output_dir` values resolve against.
pub const OUTPUT_ROOT_VAR: &str = "SPARQ_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub amplitude_sq: f64,
    pub lengthscale: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { amplitude_sq: 0.5, lengthscale: 3.0 }
    }
}

fn default_domain() -> [f64; 2] {
    [-50.0, 50.0]
}
fn default_centers() -> usize {
    20
}
fn default_bound() -> f64 {
    5.0
}
fn default_freq() -> f64 {
    0.3
}
fn default_sigma() -> f64 {
    0.1
}
fn default_grid() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Drifting RKHS function on a one-dimensional domain.
    Synthetic {
        #[serde(default = "default_domain")]
        domain: [f64; 2],
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default = "default_bound")]
        rkhs_bound: f64,
        #[serde(default = "default_freq")]
        time_freq: f64,
        #[serde(default = "default_sigma")]
        sigma_sq: f64,
    },
    /// Random-walk drift from a zero start on the candidate grid.
    Brownian {
        #[serde(default = "default_domain")]
        domain: [f64; 2],
        step_scale: f64,
        #[serde(default = "default_sigma")]
        sigma_sq: f64,
    },
    /// Gridded series from a `t,x1..xd,value` CSV, relative to the config file.
    GridSeries {
        path: PathBuf,
        #[serde(default = "default_sigma")]
        sigma_sq: f64,
    },
}

impl EnvSpec {
    pub fn sigma_sq(&self) -> f64 {
        match self {
            EnvSpec::Synthetic { sigma_sq, .. } | EnvSpec::Brownian { sigma_sq, .. } | EnvSpec::GridSeries { sigma_sq, .. } => {
                *sigma_sq
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    /// Unique within an experiment; names trace files. Defaults to the variant.
    pub label: String,
    pub config: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub horizon: usize,
    pub seeds: usize,
    pub seed_offset: u64,
    /// Candidate points for the one-dimensional environments.
    pub grid_size: usize,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub plots: bool,
    pub kernel: KernelSection,
    pub environment: EnvSpec,
    pub policies: Vec<PolicyEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    name: Option<String>,
    horizon: usize,
    seeds: usize,
    #[serde(default)]
    seed_offset: u64,
    #[serde(default = "default_grid")]
    grid_size: usize,
    output_dir: PathBuf,
    #[serde(default)]
    threads: usize,
    #[serde(default)]
    plots: bool,
    #[serde(default)]
    kernel: KernelSection,
    environment: EnvSpec,
    policies: Vec<toml::Table>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Parses and validates; relative data paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table, base_dir)
    }

    pub fn from_table(table: toml::Table, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let sigma = raw.environment.sigma_sq();
        let mut policies = Vec::with_capacity(raw.policies.len());
        for (i, mut t) in raw.policies.into_iter().enumerate() {
            let label = match t.remove("label") {
                Some(toml::Value::String(s)) => Some(s),
                Some(other) => return invalid(format!("policies[{i}].label must be a string, got {other}")),
                None => None,
            };
            // policies see the environment's noise level unless told otherwise
            t.entry("sigma_sq").or_insert(toml::Value::Float(sigma));
            let config: PolicyConfig =
                toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(format!("policies[{i}]: {e}")))?;
            let label = label.unwrap_or_else(|| config.variant.to_string());
            policies.push(PolicyEntry { label, config });
        }
        let environment = match raw.environment {
            EnvSpec::GridSeries { path, sigma_sq } if path.is_relative() => EnvSpec::GridSeries { path: base_dir.join(path), sigma_sq },
            other => other,
        };
        let cfg = ExperimentConfig {
            name: raw.name.unwrap_or_else(|| "experiment".into()),
            horizon: raw.horizon,
            seeds: raw.seeds,
            seed_offset: raw.seed_offset,
            grid_size: raw.grid_size,
            output_dir: raw.output_dir,
            threads: raw.threads,
            plots: raw.plots,
            kernel: raw.kernel,
            environment,
            policies,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return invalid("horizon must be >= 1");
        }
        if self.seeds == 0 {
            return invalid("seeds must be >= 1");
        }
        if self.policies.is_empty() {
            return invalid("at least one [[policies]] entry is required");
        }
        let mut labels = BTreeSet::new();
        for p in &self.policies {
            if !labels.insert(p.label.as_str()) {
                return invalid(format!("duplicate policy label `{}`", p.label));
            }
            if p.label.is_empty() || p.label.contains(['/', '\\']) || p.label.contains("_seed") {
                return invalid(format!("policy label `{}` must be non-empty and free of path separators and `_seed`", p.label));
            }
            p.config.validate().map_err(|e| ConfigError::Invalid(format!("policy `{}`: {e}", p.label)))?;
        }
        let dim = match &self.environment {
            EnvSpec::Synthetic { domain, n_centers, rkhs_bound, sigma_sq, time_freq } => {
                check_domain(domain)?;
                if *n_centers == 0 || !(*rkhs_bound > 0.0) || !(*sigma_sq > 0.0) || !time_freq.is_finite() {
                    return invalid("synthetic environment needs n_centers >= 1, rkhs_bound > 0, sigma_sq > 0, finite time_freq");
                }
                1
            }
            EnvSpec::Brownian { domain, step_scale, sigma_sq } => {
                check_domain(domain)?;
                if !(*step_scale >= 0.0) || !(*sigma_sq > 0.0) {
                    return invalid("brownian environment needs step_scale >= 0 and sigma_sq > 0");
                }
                1
            }
            EnvSpec::GridSeries { path, sigma_sq } => {
                if !(*sigma_sq > 0.0) {
                    return invalid("grid_series environment needs sigma_sq > 0");
                }
                let env = GridSeriesEnv::from_csv_path(path, *sigma_sq)
                    .map_err(|e| ConfigError::Invalid(format!("grid series {}: {e}", path.display())))?;
                if env.times().len() < self.horizon {
                    return invalid(format!("horizon {} exceeds the {} time steps in {}", self.horizon, env.times().len(), path.display()));
                }
                env.grid()[0].len()
            }
        };
        if !matches!(self.environment, EnvSpec::GridSeries { .. }) && self.grid_size == 0 {
            return invalid("grid_size must be >= 1");
        }
        KernelSpec::new(self.kernel.amplitude_sq, self.kernel.lengthscale, dim).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed_offset + i).collect()
    }

    /// `output_dir`, placed under `$SPARQ_OUTPUT_ROOT` when that is set and
    /// the configured path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

fn check_domain(d: &[f64; 2]) -> Result<(), ConfigError> {
    if d[0].is_finite() && d[1].is_finite() && d[1] > d[0] {
        Ok(())
    } else {
        invalid(format!("domain must be [lo, hi] with lo < hi, got {d:?}"))
    }
}

/// Sets `key` (dotted path) to `value` in `table`. A path through
/// `policies` applies to every entry; `policies.<LABEL>.field` to the entries
/// whose label or variant matches.
pub fn apply_override(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return invalid(format!("malformed parameter key `{key}`"));
    }
    if parts[0] == "policies" {
        let Some(toml::Value::Array(entries)) = table.get_mut("policies") else {
            return invalid("no [[policies]] to override");
        };
        let (filter, field) = match parts.len() {
            2 => (None, parts[1]),
            3 => (Some(parts[1]), parts[2]),
            _ => return invalid(format!("policy override must be `policies.field` or `policies.LABEL.field`, got `{key}`")),
        };
        let mut hit = false;
        for e in entries.iter_mut() {
            let Some(t) = e.as_table_mut() else { continue };
            let matches = filter.is_none_or(|f| {
                let name = |k: &str| t.get(k).and_then(|v| v.as_str()).map(|s| s.eq_ignore_ascii_case(f)).unwrap_or(false);
                name("label") || name("variant")
            });
            if matches {
                t.insert(field.to_string(), value.clone());
                hit = true;
            }
        }
        if !hit {
            return invalid(format!("override `{key}` matches no policy"));
        }
        return Ok(());
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = match cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => return invalid(format!("`{p}` in `{key}` is not a table")),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads a sweep value as TOML (number, bool, quoted string), falling back
/// to a bare string.
pub fn parse_value(text: &str) -> toml::Value {
    let text = text.trim();
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// `key=v1,v2,...` split into a key and its values.
pub fn parse_param(spec: &str) -> Result<(String, Vec<toml::Value>), ConfigError> {
    let Some((key, vals)) = spec.split_once('=') else {
        return invalid(format!("--param expects key=v1,v2,..., got `{spec}`"));
    };
    let values: Vec<toml::Value> = vals.split(',').filter(|v| !v.trim().is_empty()).map(parse_value).collect();
    if key.trim().is_empty() || values.is_empty() {
        return invalid(format!("--param expects key=v1,v2,..., got `{spec}`"));
    }
    Ok((key.trim().to_string(), values))
}
