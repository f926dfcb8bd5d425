use super::AnalysisError;
use crate::policy::drift_factor;

/// `S_τ = Σ_{t≤τ} n_t / (σ²(1 + (τ − t)^α))`, with `n[t-1] = n_t`.
pub fn info_sum(n: &[usize], tau: usize, alpha: f64, sigma_sq: f64) -> Result<f64, AnalysisError> {
    if n.len() < tau {
        return Err(AnalysisError::Invalid(format!("need {tau} query counts, got {}", n.len())));
    }
    if !(sigma_sq > 0.0) || !(alpha >= 0.0) {
        return Err(AnalysisError::Invalid(format!("need σ² > 0 and α >= 0 (σ²={sigma_sq}, α={alpha})")));
    }
    Ok((1..=tau).map(|t| n[t - 1] as f64 / (sigma_sq * (1.0 + drift_factor(tau - t, alpha)))).sum())
}

/// `max(0, 1 − (kl_sum/M² + ln 2)/ln M)`.
pub fn fano_error_bound(m: usize, kl_sum: f64) -> Result<f64, AnalysisError> {
    if m < 2 {
        return Err(AnalysisError::Invalid(format!("Fano bound needs M >= 2, got {m}")));
    }
    if !(kl_sum >= 0.0) {
        return Err(AnalysisError::Invalid(format!("KL sum must be >= 0, got {kl_sum}")));
    }
    let m = m as f64;
    Ok((1.0 - (kl_sum / (m * m) + std::f64::consts::LN_2) / m.ln()).max(0.0))
}

/// `C₁·M·γ²·Σ 1/σ_t²`.
pub fn kl_sum_bound(gamma: f64, m: usize, inv_var_sum: f64, c1: f64) -> f64 {
    c1 * m as f64 * gamma * gamma * inv_var_sum
}

/// `F(L) = L^{−α} + 4L/T`.
pub fn window_objective(l: f64, alpha: f64, t: usize) -> f64 {
    l.powf(-alpha) + 4.0 * l / t as f64
}

/// Continuous minimizer `L* = (α/8)^{1/(α+1)} T^{1/(α+1)}` and `F(L*)`.
pub fn critical_window(alpha: f64, t: usize) -> Result<(f64, f64), AnalysisError> {
    if !(alpha > 0.0) || t == 0 {
        return Err(AnalysisError::Invalid(format!("need α > 0 and T >= 1 (α={alpha}, T={t})")));
    }
    let e = 1.0 / (alpha + 1.0);
    let l = (alpha / 8.0).powf(e) * (t as f64).powf(e);
    Ok((l, window_objective(l, alpha, t)))
}

/// Exact stationary point of `F`: `(α/4)^{1/(α+1)} T^{1/(α+1)}`.
///
/// [`critical_window`] returns the `α/8` closed form, which sits below this
/// minimizer by a factor `2^{−1/(α+1)}`; both scale as `T^{1/(α+1)}`.
pub fn stationary_window(alpha: f64, t: usize) -> f64 {
    let e = 1.0 / (alpha + 1.0);
    (alpha / 4.0).powf(e) * (t as f64).powf(e)
}

/// Best integer window in `1..=max(1, T/2)` by brute force.
pub fn critical_window_scan(alpha: f64, t: usize) -> (usize, f64) {
    let mut best = (1, window_objective(1.0, alpha, t));
    for l in 2..=(t / 2).max(1) {
        let f = window_objective(l as f64, alpha, t);
        if f < best.1 {
            best = (l, f);
        }
    }
    best
}

/// `Σ_{t≤T} 1/(σ²(1 + (T − t)^α))`: information carried by bandit pulls alone.
pub fn bandit_inverse_variance_sum(t_max: usize, alpha: f64, sigma_sq: f64) -> f64 {
    (1..=t_max).map(|t| 1.0 / (sigma_sq * (1.0 + drift_factor(t_max - t, alpha)))).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessityReport {
    pub alpha: f64,
    pub horizon: usize,
    pub n_t: usize,
    pub bandit_sum: f64,
    pub l_star: f64,
    pub f_star: f64,
    /// `N_T·F(L*)/σ²`: information-sum cap at the endpoints of query-sparse windows.
    pub info_cap: f64,
    /// `T^{α/(α+1)}`.
    pub threshold: f64,
    pub verdict: String,
    pub notes: Vec<String>,
}

/// Compares a query count against the `T^{α/(α+1)}` necessity scale.
pub fn necessity_check(alpha: f64, t: usize, n_t: usize, sigma_sq: f64) -> Result<NecessityReport, AnalysisError> {
    if !(sigma_sq > 0.0) {
        return Err(AnalysisError::Invalid(format!("σ² must be > 0, got {sigma_sq}")));
    }
    let (l_star, f_star) = critical_window(alpha, t)?;
    let threshold = (t as f64).powf(alpha / (alpha + 1.0));
    let mut notes = Vec::new();
    if alpha <= 1.0 {
        notes.push(format!("α = {alpha} <= 1: the bandit sum is not bounded in T and the necessity result does not apply"));
    } else if alpha <= 1.1 {
        notes.push(format!("α = {alpha} is close to 1: the bandit sum converges slowly, finite-T figures are loose"));
    }
    if l_star > t as f64 / 2.0 {
        notes.push(format!("L* = {l_star:.3} exceeds T/2; T is below the range where the window argument applies"));
    }
    let verdict = if (n_t as f64) > threshold {
        format!("above threshold: N_T = {n_t} > T^(α/(α+1)) = {threshold:.3}")
    } else {
        format!("at or below threshold: N_T = {n_t} <= T^(α/(α+1)) = {threshold:.3}, sublinear regret cannot be guaranteed")
    };
    Ok(NecessityReport {
        alpha,
        horizon: t,
        n_t,
        bandit_sum: bandit_inverse_variance_sum(t, alpha, sigma_sq),
        l_star,
        f_star,
        info_cap: n_t as f64 * f_star / sigma_sq,
        threshold,
        verdict,
        notes,
    })
}
