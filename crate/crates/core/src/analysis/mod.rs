//! Regret accounting, bound overlays and lower-bound diagnostics.

mod adversary;
mod lower;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::Point;

pub use adversary::{bump, build_adversary, AdversaryFamily, BUMP_QUADRATURE_POINTS};
pub use lower::{
    bandit_inverse_variance_sum, critical_window, critical_window_scan, fano_error_bound, info_sum, kl_sum_bound,
    necessity_check, stationary_window, window_objective, NecessityReport,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One step of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: Point,
    pub y: f64,
    /// `f_t(x_t)`.
    pub f_x: f64,
    /// `f_t(x*_t)` over the shared candidate grid.
    pub f_opt: f64,
    pub regret: f64,
    /// Expert queries made at this step.
    pub queries: usize,
    /// Confidence multiplier used to choose `x_t`.
    pub beta: f64,
}

/// Per-step records of one (policy, seed) run. Wall time is kept for the
/// summary only so that trace files stay byte-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub label: String,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub wall_time_s: f64,
}

impl RunTrace {
    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn total_queries(&self) -> usize {
        self.records.iter().map(|r| r.queries).sum()
    }

    pub fn final_regret(&self) -> f64 {
        self.records.iter().map(|r| r.regret).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let d = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|j| format!("x{j}")));
        header.extend(["y", "f_x", "f_opt", "regret", "queries", "beta"].map(String::from));
        w.write_record(&header)?;
        for r in &self.records {
            if r.x.len() != d {
                return Err(AnalysisError::Trace(format!("step {} has dimension {} instead of {d}", r.t, r.x.len())));
            }
            let mut row = vec![r.t.to_string()];
            row.extend(r.x.iter().map(|v| v.to_string()));
            row.extend([r.y, r.f_x, r.f_opt, r.regret].iter().map(|v| v.to_string()));
            row.push(r.queries.to_string());
            row.push(r.beta.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, label: &str, seed: u64) -> Result<Self, AnalysisError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        let tail = ["y", "f_x", "f_opt", "regret", "queries", "beta"];
        if n < 2 + tail.len() || &headers[0] != "t" || headers.iter().skip(n - tail.len()).ne(tail.iter().copied()) {
            return Err(AnalysisError::Trace(format!("unexpected header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let d = n - 1 - tail.len();
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |j: usize| AnalysisError::Trace(format!("row {}: bad value `{}` in column {}", line + 2, &rec[j], j + 1));
            let f = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(j));
            let u = |j: usize| rec[j].parse::<usize>().map_err(|_| bad(j));
            records.push(StepRecord {
                t: u(0)?,
                x: (1..=d).map(f).collect::<Result<_, _>>()?,
                y: f(d + 1)?,
                f_x: f(d + 2)?,
                f_opt: f(d + 3)?,
                regret: f(d + 4)?,
                queries: u(d + 5)?,
                beta: f(d + 6)?,
            });
        }
        Ok(Self { label: label.to_string(), seed, records, wall_time_s: 0.0 })
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), AnalysisError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv_path(path: &Path, label: &str, seed: u64) -> Result<Self, AnalysisError> {
        Self::read_csv(std::fs::File::open(path)?, label, seed)
    }
}

/// Prefix sums `R_t = Σ_{s≤t} r_s`.
pub fn cumulative_regret(trace: &RunTrace) -> Vec<f64> {
    trace
        .records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.regret;
            Some(*acc)
        })
        .collect()
}

/// Prefix sums of the expert queries, `N_t`.
pub fn cumulative_queries(trace: &RunTrace) -> Vec<usize> {
    trace
        .records
        .iter()
        .scan(0usize, |acc, r| {
            *acc += r.queries;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundKind {
    /// GP-UCB under uncertainty injection: `√(d² T^{3α+1} log^{2(d+1)} T)`.
    BanditUpper,
    /// W-SparQ: `T^{2α̃+1} d log^{d+1}T (log(1/δ) + d T^{α̃} log^{d+1}T)`.
    WsparqUpper,
    /// Bandit lower bound for `α < 1`: `√(T^{α+1})`.
    BanditLowerSmall,
    /// Bandit lower bound for `α ≥ 1`: `T`.
    BanditLowerLarge,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] =
        [BoundKind::BanditUpper, BoundKind::WsparqUpper, BoundKind::BanditLowerSmall, BoundKind::BanditLowerLarge];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::BanditUpper => "BANDIT_UPPER",
            BoundKind::WsparqUpper => "WSPARQ_UPPER",
            BoundKind::BanditLowerSmall => "BANDIT_LOWER_SMALL",
            BoundKind::BanditLowerLarge => "BANDIT_LOWER_LARGE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayParams {
    /// Multiplicative constant; the rates are orders only.
    pub c: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub d: usize,
    pub delta: f64,
}

/// Rate shape of `kind` at horizon `t` with unit constant.
fn rate(kind: BoundKind, p: &OverlayParams, t: f64) -> f64 {
    let d = p.d as f64;
    let lt = t.ln();
    match kind {
        BoundKind::BanditUpper => (d * d * t.powf(3.0 * p.alpha + 1.0) * lt.powf(2.0 * (d + 1.0))).sqrt(),
        BoundKind::WsparqUpper => {
            let poly = lt.powf(d + 1.0);
            t.powf(2.0 * p.alpha_tilde + 1.0) * d * poly * ((1.0 / p.delta).ln() + d * t.powf(p.alpha_tilde) * poly)
        }
        BoundKind::BanditLowerSmall => t.powf(p.alpha + 1.0).sqrt(),
        BoundKind::BanditLowerLarge => t,
    }
}

/// `c ×` the rate of `kind` at each horizon. These are shape overlays for
/// plots, not certified bounds.
pub fn bound_overlay(kind: BoundKind, params: &OverlayParams, t_grid: &[f64]) -> Vec<f64> {
    t_grid.iter().map(|&t| if params.c == 0.0 { 0.0 } else { params.c * rate(kind, params, t) }).collect()
}

/// Constant making the overlay pass through `(t_ref, value)`; 0 when the
/// rate vanishes there.
pub fn fit_overlay_constant(kind: BoundKind, params: &OverlayParams, t_ref: f64, value: f64) -> f64 {
    let r = rate(kind, params, t_ref);
    if r.is_finite() && r > 0.0 {
        value / r
    } else {
        0.0
    }
}

/// Least-squares slope of `ln y` against `ln x` over points with `y > 0`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Pointwise mean and (population) standard deviation of equal-length curves.
pub fn mean_std(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let Some(len) = curves.iter().map(Vec::len).min() else {
        return (Vec::new(), Vec::new());
    };
    let n = curves.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for i in 0..len {
        let m = curves.iter().map(|c| c[i]).sum::<f64>() / n;
        mean[i] = m;
        std[i] = (curves.iter().map(|c| (c[i] - m) * (c[i] - m)).sum::<f64>() / n).sqrt();
    }
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(regrets: &[f64]) -> RunTrace {
        RunTrace {
            label: "x".into(),
            seed: 1,
            records: regrets
                .iter()
                .enumerate()
                .map(|(i, &r)| StepRecord {
                    t: i + 1,
                    x: vec![i as f64 * 0.1, -1.5],
                    y: 0.1 / 3.0,
                    f_x: 1.0 - r,
                    f_opt: 1.0,
                    regret: r,
                    queries: i % 3,
                    beta: 5.0 + 1e-17 * i as f64,
                })
                .collect(),
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn prefix_sums() {
        assert_eq!(cumulative_regret(&trace(&[0.0, 0.0])), vec![0.0, 0.0]);
        assert_eq!(cumulative_regret(&trace(&[1.0, 2.0, 3.0])), vec![1.0, 3.0, 6.0]);
        assert_eq!(cumulative_queries(&trace(&[0.0; 4])), vec![0, 1, 3, 3]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = trace(&[0.3, 1.0 / 7.0, 2.5e-13, 0.0]);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = RunTrace::read_csv(buf.as_slice(), "x", 1).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn malformed_trace_rejected() {
        assert!(RunTrace::read_csv("a,b\n1,2\n".as_bytes(), "x", 0).is_err());
        let bad = "t,x1,y,f_x,f_opt,regret,queries,beta\n1,0.5,nope,1,1,0,0,5\n";
        assert!(RunTrace::read_csv(bad.as_bytes(), "x", 0).is_err());
    }

    #[test]
    fn overlay_shapes() {
        let p = OverlayParams { c: 2.0, alpha: 0.0, alpha_tilde: 0.25, d: 1, delta: 0.1 };
        let grid = [10.0, 100.0, 500.0];
        let up = bound_overlay(BoundKind::BanditUpper, &p, &grid);
        for (v, t) in up.iter().zip(grid) {
            let expect = 2.0 * (t * t.ln().powi(4)).sqrt();
            assert!((v - expect).abs() < 1e-9 * expect);
        }
        let zero = OverlayParams { c: 0.0, ..p };
        for k in BoundKind::ALL {
            assert!(bound_overlay(k, &zero, &grid).iter().all(|v| *v == 0.0));
        }
        let c = fit_overlay_constant(BoundKind::BanditLowerLarge, &p, 250.0, 50.0);
        assert!((c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = (1..50).map(|i| i as f64 * 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.7)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 0.7).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn mean_of_two_curves() {
        let (m, s) = mean_std(&[vec![1.0, 2.0], vec![3.0, 6.0]]);
        assert_eq!(m, vec![2.0, 4.0]);
        assert_eq!(s, vec![1.0, 2.0]);
    }
}
