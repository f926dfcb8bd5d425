use std::f64::consts::PI;

use super::AnalysisError;

/// Trapezoid nodes on `[−1, 1]` for the bump transform.
pub const BUMP_QUADRATURE_POINTS: usize = 4096;
/// Spacing and extent of the tabulated transform; beyond the table the
/// transform is below `1e-7·h(0)` and taken as 0.
const PROFILE_STEP: f64 = 0.005;
const PROFILE_MAX: f64 = 40.0;

/// `H(ξ) = exp(−1/(1 − ξ²))` on `|ξ| < 1`, 0 elsewhere.
pub fn bump(xi: f64) -> f64 {
    let r = 1.0 - xi * xi;
    if r > 0.0 {
        (-1.0 / r).exp()
    } else {
        0.0
    }
}

fn nodes() -> (Vec<f64>, Vec<f64>) {
    let n = BUMP_QUADRATURE_POINTS;
    let dx = 2.0 / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + i as f64 * dx).collect();
    let ws: Vec<f64> = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * dx } else { dx }).collect();
    (xs, ws)
}

/// Trapezoid-rule `h(y) = ∫ H(ξ) cos(2π ξ y) dξ` over precomputed nodes.
struct Transform {
    xi: Vec<f64>,
    weighted: Vec<f64>,
}

impl Transform {
    fn new() -> Self {
        let (xi, ws) = nodes();
        let weighted = xi.iter().zip(&ws).map(|(x, w)| bump(*x) * w).collect();
        Self { xi, weighted }
    }

    fn eval(&self, y: f64) -> f64 {
        self.xi.iter().zip(&self.weighted).map(|(x, w)| w * (2.0 * PI * x * y).cos()).sum()
    }
}

/// Adversarial family of shifted bumps on a one-dimensional domain.
#[derive(Debug, Clone)]
pub struct AdversaryFamily {
    pub d: usize,
    pub gamma: f64,
    pub m: usize,
    /// Unfloored count before taking the integer part.
    pub m_real: f64,
    pub domain: (f64, f64),
    pub cell_width: f64,
    /// Member `m` peaks at the center of cell `m`.
    pub peaks: Vec<f64>,
    /// Input scale: `f^m(x) = (2γ/h(0))·h((x − c_m)/scale)`.
    pub scale: f64,
    pub h0: f64,
    pub zeta: f64,
    pub profile_step: f64,
    /// `h` at `0, step, 2·step, …`.
    pub profile: Vec<f64>,
    pub rkhs_bound: f64,
    pub lengthscale: f64,
    /// Norm estimate of the bump at the scale implied by the count formula.
    pub base_norm: f64,
    /// Norm estimate of the members at their actual scale.
    pub member_norm: f64,
}

impl AdversaryFamily {
    /// Tabulated `h`, linearly interpolated; symmetric in `y`.
    pub fn h(&self, y: f64) -> f64 {
        let y = y.abs() / self.profile_step;
        let i = y.floor() as usize;
        if i + 1 >= self.profile.len() {
            return 0.0;
        }
        let frac = y - i as f64;
        self.profile[i] * (1.0 - frac) + self.profile[i + 1] * frac
    }

    pub fn eval(&self, member: usize, x: f64) -> f64 {
        2.0 * self.gamma / self.h0 * self.h((x - self.peaks[member]) / self.scale)
    }

    /// Index of the cell containing `x` (clamped to the domain).
    pub fn cell_of(&self, x: f64) -> usize {
        (((x - self.domain.0) / self.cell_width).floor().max(0.0) as usize).min(self.m - 1)
    }
}

/// `‖a·h(·/s)‖²` in the RKHS of the unit-amplitude SE kernel with
/// lengthscale `l`:
/// `a²·s/(√(2π)·l) · ∫ H(u)² exp(2π²l²u²/s²) du`.
pub fn bump_norm_sq(a: f64, s: f64, l: f64) -> f64 {
    let (xs, ws) = nodes();
    let c = 2.0 * PI * PI * l * l / (s * s);
    let integral: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(u, w)| {
            let r = 1.0 - u * u;
            if r > 0.0 {
                w * (-2.0 / r + c * u * u).exp()
            } else {
                0.0
            }
        })
        .sum();
    a * a * s / ((2.0 * PI).sqrt() * l) * integral
}

/// Builds the family for `d = 1`: `M` from the count/amplitude relation
/// (with the domain length as a scale factor), one member per uniform cell,
/// each peaking at `2γ` with its `γ`-superlevel set inside its own cell.
pub fn build_adversary(d: usize, gamma: f64, b: f64, l: f64, domain: (f64, f64)) -> Result<AdversaryFamily, AnalysisError> {
    if d != 1 {
        return Err(AnalysisError::Invalid(format!("adversary construction supports d = 1 only, got {d}")));
    }
    let (lo, hi) = domain;
    if !(hi > lo) || !(gamma > 0.0) || !(b > 0.0) || !(l > 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "need γ, B, l > 0 and a non-empty domain (γ={gamma}, B={b}, l={l}, domain=[{lo}, {hi}])"
        )));
    }
    let tr = Transform::new();
    let h0 = tr.eval(0.0);

    let step = l / 100.0;
    let reach = (20.0 * l).max(2.0);
    let mut last_above = 0usize;
    let mut k = 0usize;
    while k as f64 * step <= reach {
        if tr.eval(k as f64 * step) >= h0 / 2.0 {
            last_above = k;
        }
        k += 1;
    }
    let zeta = (last_above + 1) as f64 * step;

    let len = hi - lo;
    let log_arg = b * (2.0 * PI * l * l).powf(d as f64 / 4.0) * h0 / (2.0 * gamma);
    let x = log_arg.ln();
    if !(x > 0.0) {
        return Err(AnalysisError::Invalid(format!("γ = {gamma} too large for B = {b}: logarithm argument {log_arg:.4} <= 1")));
    }
    let m_real = (len * x.sqrt() / (l * PI * zeta)).powi(d as i32);
    let m = m_real.floor() as usize;
    if m < 2 {
        return Err(AnalysisError::Invalid(format!("γ = {gamma} too large for B = {b}, l = {l}: M = {m} < 2")));
    }

    let cell_width = len / m as f64;
    let peaks = (0..m).map(|i| lo + (i as f64 + 0.5) * cell_width).collect();
    let scale = cell_width / (2.0 * zeta);
    let profile = (0..=(PROFILE_MAX / PROFILE_STEP).round() as usize).map(|i| tr.eval(i as f64 * PROFILE_STEP)).collect();
    let a = 2.0 * gamma / h0;
    let base_scale = len / m_real / zeta;
    let base_norm = bump_norm_sq(a, base_scale, l).sqrt();
    let member_norm = bump_norm_sq(a, scale, l).sqrt();
    if member_norm > b {
        log::info!("adversary members: RKHS norm estimate {member_norm:.4e} above B = {b} at the half-cell scale");
    }
    Ok(AdversaryFamily {
        d,
        gamma,
        m,
        m_real,
        domain,
        cell_width,
        peaks,
        scale,
        h0,
        zeta,
        profile_step: PROFILE_STEP,
        profile,
        rkhs_bound: b,
        lengthscale: l,
        base_norm,
        member_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_values() {
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-1.5), 0.0);
        assert!((bump(0.0) - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn transform_at_zero_is_bump_integral() {
        // Simpson's rule on a finer mesh as the reference
        let n = 200_000;
        let hstep = 2.0 / n as f64;
        let mut s = bump(-1.0) + bump(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * bump(-1.0 + i as f64 * hstep);
        }
        let simpson = s * hstep / 3.0;
        assert!((Transform::new().eval(0.0) - simpson).abs() < 1e-9);
        assert!(simpson > 0.44 && simpson < 0.45);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_adversary(2, 0.01, 5.0, 0.05, (0.0, 1.0)).is_err());
        assert!(build_adversary(1, 10.0, 1.0, 0.05, (0.0, 1.0)).is_err());
        assert!(build_adversary(1, 0.01, 5.0, 0.05, (1.0, 1.0)).is_err());
    }

    #[test]
    fn members_peak_and_separate() {
        let fam = build_adversary(1, 0.01, 5.0, 0.05, (0.0, 1.0)).unwrap();
        assert!(fam.m >= 2);
        for m in 0..fam.m {
            let peak = fam.eval(m, fam.peaks[m]);
            assert!((peak - 0.02).abs() < 1e-12);
            assert_eq!(fam.cell_of(fam.peaks[m]), m);
        }
        assert!(fam.base_norm <= 5.0 * 1.05);
    }
}
