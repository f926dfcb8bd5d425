//! The `adversary` subcommand: bump family tables and lower-bound diagnostics.

use std::fmt::Write as _;
use std::path::Path;

use sparq_core::analysis::{build_adversary, necessity_check, AdversaryFamily};

#[derive(Debug, Clone)]
pub struct AdversaryRequest {
    pub gamma: f64,
    pub rkhs_bound: f64,
    pub lengthscale: f64,
    pub domain: (f64, f64),
    /// Dense-scan resolution per cell.
    pub points_per_cell: usize,
    pub necessity: Option<NecessityRequest>,
}

#[derive(Debug, Clone, Copy)]
pub struct NecessityRequest {
    pub alpha: f64,
    pub horizon: usize,
    pub queries: usize,
    pub sigma_sq: f64,
}

/// Largest value member `i` takes inside any other member's cell.
pub fn worst_cross_cell(fam: &AdversaryFamily, points_per_cell: usize) -> f64 {
    let n = fam.m * points_per_cell.max(2);
    let (lo, hi) = fam.domain;
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        let cell = fam.cell_of(x);
        for i in 0..fam.m {
            if i != cell {
                worst = worst.max(fam.eval(i, x));
            }
        }
    }
    worst
}

/// Builds the family, writes `adversary_members.csv` and
/// `adversary_profile.csv` to `out_dir` and returns a text report.
pub fn run_adversary(req: &AdversaryRequest, out_dir: &Path) -> anyhow::Result<String> {
    let fam = build_adversary(1, req.gamma, req.rkhs_bound, req.lengthscale, req.domain)?;
    std::fs::create_dir_all(out_dir)?;

    let mut w = csv::Writer::from_path(out_dir.join("adversary_members.csv"))?;
    w.write_record(["member", "peak", "cell_lo", "cell_hi", "peak_value"])?;
    for (m, &p) in fam.peaks.iter().enumerate() {
        let lo = fam.domain.0 + m as f64 * fam.cell_width;
        w.write_record([m.to_string(), p.to_string(), lo.to_string(), (lo + fam.cell_width).to_string(), fam.eval(m, p).to_string()])?;
    }
    w.flush()?;

    let n = fam.m * req.points_per_cell.max(2);
    let mut w = csv::Writer::from_path(out_dir.join("adversary_profile.csv"))?;
    let mut header = vec!["x".to_string()];
    header.extend((0..fam.m).map(|m| format!("f{m}")));
    w.write_record(&header)?;
    let (lo, hi) = fam.domain;
    for k in 0..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        let mut row = vec![x.to_string()];
        row.extend((0..fam.m).map(|m| fam.eval(m, x).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let cross = worst_cross_cell(&fam, req.points_per_cell);
    let mut s = String::new();
    writeln!(s, "h(0)              {:.9}", fam.h0)?;
    writeln!(s, "zeta              {:.6}", fam.zeta)?;
    writeln!(s, "M                 {} (unfloored {:.4})", fam.m, fam.m_real)?;
    writeln!(s, "cell width        {:.6}", fam.cell_width)?;
    writeln!(s, "member scale      {:.6}", fam.scale)?;
    writeln!(s, "peak (2 gamma)    {:.6}", 2.0 * fam.gamma)?;
    writeln!(s, "max cross-cell    {cross:.6} (gamma = {})", fam.gamma)?;
    writeln!(s, "norm, base bump   {:.6} (B = {})", fam.base_norm, fam.rkhs_bound)?;
    writeln!(s, "norm, members     {:.6e}", fam.member_norm)?;
    if let Some(nr) = req.necessity {
        let r = necessity_check(nr.alpha, nr.horizon, nr.queries, nr.sigma_sq)?;
        writeln!(s, "bandit info sum   {:.6}", r.bandit_sum)?;
        writeln!(s, "L*, F(L*)         {:.4}, {:.6}", r.l_star, r.f_star)?;
        writeln!(s, "info cap          {:.6}", r.info_cap)?;
        writeln!(s, "verdict           {}", r.verdict)?;
        for n in &r.notes {
            writeln!(s, "note              {n}")?;
        }
    }
    std::fs::write(out_dir.join("adversary_report.txt"), &s)?;
    Ok(s)
}
