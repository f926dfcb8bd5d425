//! Cartesian parameter sweeps over one base configuration.

use std::path::Path;

use crate::config::{apply_override, ConfigError, ExperimentConfig};
use crate::experiment::{run_experiment, ExperimentReport};

fn value_tag(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One configuration per point of the product of `params`, each writing to
/// `<output_dir>/<key=value>[__<key=value>...]`.
pub fn expand(base: &toml::Table, base_dir: &Path, params: &[(String, Vec<toml::Value>)]) -> Result<Vec<(String, ExperimentConfig)>, ConfigError> {
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (key, values) in params {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let mut out = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut table = base.clone();
        for (k, v) in &combo {
            apply_override(&mut table, k, v.clone())?;
        }
        let tag = combo.iter().map(|(k, v)| format!("{k}={}", value_tag(v))).collect::<Vec<_>>().join("__");
        let mut cfg = ExperimentConfig::from_table(table, base_dir).map_err(|e| ConfigError::Invalid(format!("{tag}: {e}")))?;
        cfg.output_dir = cfg.output_dir.join(&tag);
        out.push((tag, cfg));
    }
    Ok(out)
}

pub fn run_sweep(configs: &[(String, ExperimentConfig)]) -> anyhow::Result<Vec<(String, ExperimentReport)>> {
    configs.iter().map(|(tag, cfg)| Ok((tag.clone(), run_experiment(cfg)?))).collect()
}
