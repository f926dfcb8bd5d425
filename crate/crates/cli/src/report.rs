//! Aggregated curves, bound overlays and post-hoc analysis of trace folders.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use sparq_core::analysis::{
    bound_overlay, cumulative_queries, cumulative_regret, fit_overlay_constant, loglog_slope, mean_std, BoundKind, OverlayParams, RunTrace,
};

use crate::experiment::parse_trace_file_name;

/// Mean ± std curves of one label over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCurves {
    pub label: String,
    pub runs: usize,
    pub mean_regret: Vec<f64>,
    pub std_regret: Vec<f64>,
    /// Mean cumulative expert queries `N_t`.
    pub mean_queries: Vec<f64>,
}

impl LabelCurves {
    pub fn horizon(&self) -> usize {
        self.mean_regret.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    /// Log-log slope of the mean regret over `[T/2, T]`.
    pub fn late_slope(&self) -> Option<f64> {
        let n = self.horizon();
        let lo = (n / 2).max(1);
        let ts: Vec<f64> = (lo..=n).map(|t| t as f64).collect();
        loglog_slope(&ts, &self.mean_regret[lo - 1..])
    }
}

/// Groups traces by label in order of first appearance; curves are
/// truncated to the shortest trace of each label.
pub fn aggregate(traces: &[RunTrace]) -> Vec<LabelCurves> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunTrace>> = BTreeMap::new();
    for t in traces {
        if !groups.contains_key(&t.label) {
            order.push(t.label.clone());
        }
        groups.entry(t.label.clone()).or_default().push(t);
    }
    order
        .into_iter()
        .map(|label| {
            let group = &groups[&label];
            let regret: Vec<Vec<f64>> = group.iter().map(|t| cumulative_regret(t)).collect();
            let queries: Vec<Vec<f64>> = group.iter().map(|t| cumulative_queries(t).into_iter().map(|q| q as f64).collect()).collect();
            let (mean_regret, std_regret) = mean_std(&regret);
            let (mean_queries, _) = mean_std(&queries);
            LabelCurves { label, runs: group.len(), mean_regret, std_regret, mean_queries }
        })
        .collect()
}

pub fn write_curves(path: &Path, curves: &[LabelCurves]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "t", "runs", "mean_regret", "std_regret", "mean_queries", "query_rate"])?;
    for c in curves {
        for i in 0..c.horizon() {
            let t = i + 1;
            w.write_record([
                c.label.clone(),
                t.to_string(),
                c.runs.to_string(),
                c.mean_regret[i].to_string(),
                c.std_regret[i].to_string(),
                c.mean_queries[i].to_string(),
                (c.mean_queries[i] / t as f64).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn plot_regret(path: &Path, curves: &[LabelCurves], title: &str) -> anyhow::Result<()> {
    use plotters::prelude::*;
    let t_max = curves.iter().map(LabelCurves::horizon).max().unwrap_or(1).max(2);
    let y_max = curves.iter().flat_map(|c| c.mean_regret.iter().copied()).fold(1e-9, f64::max) * 1.05;
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(1f64..t_max as f64, 0f64..y_max)?;
    chart.configure_mesh().x_desc("t").y_desc("mean cumulative regret").draw()?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(c.mean_regret.iter().enumerate().map(|(j, v)| ((j + 1) as f64, *v)), color.stroke_width(2)))?
            .label(c.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub out_dir: Option<PathBuf>,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub delta: f64,
    /// Overlay constant; fitted to each label's mean regret at `T/2` when absent.
    pub c: Option<f64>,
    pub svg: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self { out_dir: None, alpha: 1.0, alpha_tilde: 0.25, delta: 0.1, c: None, svg: false }
    }
}

#[derive(Debug, Clone)]
pub struct OverlayRow {
    pub label: String,
    pub kind: BoundKind,
    pub c: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisReport {
    pub out_dir: PathBuf,
    pub traces_read: usize,
    pub skipped: Vec<PathBuf>,
    pub curves: Vec<LabelCurves>,
    pub overlays: Vec<OverlayRow>,
}

fn trace_files(dir: &Path) -> anyhow::Result<Vec<(PathBuf, String, u64)>> {
    let mut found = Vec::new();
    for d in [dir.to_path_buf(), dir.join("traces")] {
        if !d.is_dir() {
            continue;
        }
        for e in std::fs::read_dir(&d).with_context(|| format!("reading {}", d.display()))? {
            let path = e?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if let Some((label, seed)) = parse_trace_file_name(&name) {
                found.push((path, label, seed));
            }
        }
    }
    found.sort_by(|a, b| (&a.1, a.2, &a.0).cmp(&(&b.1, b.2, &b.0)));
    Ok(found)
}

pub fn overlays_for(curves: &[LabelCurves], dim: usize, opts: &AnalyzeOptions) -> Vec<OverlayRow> {
    let mut rows = Vec::new();
    for c in curves {
        let ts: Vec<f64> = (1..=c.horizon()).map(|t| t as f64).collect();
        let t_ref = (c.horizon() / 2).max(1);
        for kind in BoundKind::ALL {
            let mut p = OverlayParams { c: 1.0, alpha: opts.alpha, alpha_tilde: opts.alpha_tilde, d: dim, delta: opts.delta };
            p.c = opts.c.unwrap_or_else(|| fit_overlay_constant(kind, &p, t_ref as f64, c.mean_regret[t_ref - 1]));
            rows.push(OverlayRow { label: c.label.clone(), kind, c: p.c, values: bound_overlay(kind, &p, &ts) });
        }
    }
    rows
}

/// Per-grid-point squared prediction error averaged over seeds, from the
/// `pred/` tables written for gridded-series runs.
fn prediction_errors(dir: &Path, out: &Path) -> anyhow::Result<bool> {
    let pred = dir.join("pred");
    if !pred.is_dir() {
        return Ok(false);
    }
    let mut by_label: BTreeMap<String, (Vec<Vec<String>>, Vec<f64>, usize)> = BTreeMap::new();
    let mut header: Option<csv::StringRecord> = None;
    for (path, label, _) in trace_files(&pred)? {
        let mut rdr = match csv::Reader::from_path(&path) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let h = rdr.headers()?.clone();
        let n = h.len();
        if n < 4 || &h[n - 1] != "sq_error" {
            log::warn!("skipping {}: not a prediction table", path.display());
            continue;
        }
        let rows: Vec<csv::StringRecord> = match rdr.records().collect::<Result<_, _>>() {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let errs: Option<Vec<f64>> = rows.iter().map(|r| r[n - 1].parse().ok()).collect();
        let Some(errs) = errs else {
            log::warn!("skipping {}: bad error column", path.display());
            continue;
        };
        let entry = by_label.entry(label).or_insert_with(|| {
            let pts = rows.iter().map(|r| r.iter().take(n - 3).map(String::from).collect()).collect();
            (pts, vec![0.0; errs.len()], 0)
        });
        if entry.1.len() != errs.len() {
            log::warn!("skipping {}: grid size differs from other seeds", path.display());
            continue;
        }
        for (acc, e) in entry.1.iter_mut().zip(&errs) {
            *acc += e;
        }
        entry.2 += 1;
        header.get_or_insert(h);
    }
    let Some(h) = header else { return Ok(false) };
    let n = h.len();
    let mut w = csv::Writer::from_path(out.join("pred_error.csv"))?;
    let mut head = vec!["label".to_string()];
    head.extend(h.iter().take(n - 3).map(String::from));
    head.extend(["mean_sq_error", "runs"].map(String::from));
    w.write_record(&head)?;
    for (label, (pts, sums, runs)) in &by_label {
        for (p, s) in pts.iter().zip(sums) {
            let mut row = vec![label.clone()];
            row.extend(p.iter().cloned());
            row.push((s / *runs as f64).to_string());
            row.push(runs.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(true)
}

/// Reads every `<label>_seed<k>.csv` under `dir` (or `dir/traces`), skips
/// malformed files with a warning and writes `curves.csv`, `overlays.csv`,
/// `table.csv` and, when prediction tables exist, `pred_error.csv`.
pub fn analyze_traces(dir: &Path, opts: &AnalyzeOptions) -> anyhow::Result<AnalysisReport> {
    if !dir.is_dir() {
        anyhow::bail!("{} is not a directory", dir.display());
    }
    let out = opts.out_dir.clone().unwrap_or_else(|| dir.join("analysis"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut report = AnalysisReport { out_dir: out.clone(), ..Default::default() };
    let mut traces = Vec::new();
    for (path, label, seed) in trace_files(dir)? {
        match RunTrace::read_csv_path(&path, &label, seed) {
            Ok(t) if !t.records.is_empty() => traces.push(t),
            Ok(_) => {
                log::warn!("skipping empty trace {}", path.display());
                report.skipped.push(path);
            }
            Err(e) => {
                log::warn!("skipping malformed trace {}: {e}", path.display());
                report.skipped.push(path);
            }
        }
    }
    report.traces_read = traces.len();
    let dim = traces.first().map_or(1, RunTrace::dim);
    report.curves = aggregate(&traces);
    report.overlays = overlays_for(&report.curves, dim, opts);

    write_curves(&out.join("curves.csv"), &report.curves)?;
    let mut w = csv::Writer::from_path(out.join("overlays.csv"))?;
    w.write_record(["label", "kind", "c", "t", "value"])?;
    for o in &report.overlays {
        for (i, v) in o.values.iter().enumerate() {
            w.write_record([o.label.clone(), o.kind.as_str().into(), o.c.to_string(), (i + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("table.csv"))?;
    w.write_record(["label", "runs", "horizon", "final_mean_regret", "final_std_regret", "late_loglog_slope", "mean_queries", "query_rate"])?;
    for c in &report.curves {
        let n = c.horizon();
        let nq = c.mean_queries.last().copied().unwrap_or(0.0);
        w.write_record([
            c.label.clone(),
            c.runs.to_string(),
            n.to_string(),
            c.final_regret().to_string(),
            c.std_regret.last().copied().unwrap_or(0.0).to_string(),
            c.late_slope().map_or(String::new(), |s| s.to_string()),
            nq.to_string(),
            (nq / n.max(1) as f64).to_string(),
        ])?;
    }
    w.flush()?;
    prediction_errors(dir, &out)?;
    if opts.svg && !report.curves.is_empty() {
        plot_regret(&out.join("regret.svg"), &report.curves, "mean cumulative regret")?;
    }
    Ok(report)
}
