//! Fixed-size determinantal point processes (M-DPPs) over a PSD kernel
//! matrix, and the logarithmic expert-query budget.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::gp::linalg::LowerFactor;

/// Largest candidate set handled by full enumeration.
pub const EXACT_MAX_N: usize = 15;

/// Accepted swaps between full recomputations of the inverse.
const REFRESH_EVERY: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DppError {
    #[error("subset size {m} invalid for {n} candidates")]
    InvalidSize { m: usize, n: usize },
    #[error("exact enumeration limited to n <= {EXACT_MAX_N}, got {0}; use the MCMC sampler")]
    TooLarge(usize),
    #[error("every {0}-subset has zero determinant")]
    Degenerate(usize),
    #[error("kernel matrix is not PSD (pivot {index} = {value:e})")]
    NotPsd { index: usize, value: f64 },
    #[error("MCMC sampler needs at least one step")]
    ZeroSteps,
    #[error("kernel matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppSample {
    /// Sorted, distinct indices into the candidate set.
    pub indices: Vec<usize>,
    pub log_det: f64,
    /// Number of chain steps run; 0 for exact or deterministic selections.
    pub chain_steps: usize,
}

fn check_shape(k: &DMatrix<f64>, m: usize) -> Result<usize, DppError> {
    if k.nrows() != k.ncols() {
        return Err(DppError::NotSquare(k.nrows(), k.ncols()));
    }
    let n = k.nrows();
    if m == 0 || m > n {
        return Err(DppError::InvalidSize { m, n });
    }
    Ok(n)
}

fn principal(k: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| k[(idx[a], idx[b])])
}

/// `log det` of a principal submatrix; `-inf` when it is numerically singular.
pub fn principal_log_det(k: &DMatrix<f64>, idx: &[usize]) -> f64 {
    match LowerFactor::factor(&principal(k, idx), 0.0) {
        Ok(f) => f.logdet(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Visits every `m`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    if m > n {
        return;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx);
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - m {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Enumerated law of the M-DPP: every subset with its normalized probability.
pub fn dpp_exact_law(k: &DMatrix<f64>, m: usize) -> Result<Vec<(Vec<usize>, f64)>, DppError> {
    let n = check_shape(k, m)?;
    if n > EXACT_MAX_N {
        return Err(DppError::TooLarge(n));
    }
    let mut law = Vec::new();
    let mut total = 0.0;
    for_each_subset(n, m, |s| {
        let det = principal(k, s).determinant().max(0.0);
        total += det;
        law.push((s.to_vec(), det));
    });
    if total <= 0.0 || !total.is_finite() {
        return Err(DppError::Degenerate(m));
    }
    for entry in &mut law {
        entry.1 /= total;
    }
    Ok(law)
}

/// Exact M-DPP draw by enumerating all `C(n, M)` subsets.
pub fn dpp_exact_sample<R: Rng + ?Sized>(k: &DMatrix<f64>, m: usize, rng: &mut R) -> Result<DppSample, DppError> {
    let law = dpp_exact_law(k, m)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for (s, p) in &law {
        acc += p;
        if *p > 0.0 && u < acc {
            chosen = Some(s);
            break;
        }
    }
    // rounding can leave u just above the final partial sum
    let s = chosen.unwrap_or_else(|| &law.iter().rev().find(|(_, p)| *p > 0.0).expect("non-degenerate law").0);
    Ok(DppSample { indices: s.clone(), log_det: principal_log_det(k, s), chain_steps: 0 })
}

/// Default chain length `10·n·ln n` (at least 1).
pub fn default_mcmc_steps(n: usize) -> usize {
    let n = n as f64;
    ((10.0 * n * n.ln()).ceil() as usize).max(1)
}

/// Swap-chain state: the current subset and the inverse of its kernel block.
pub(crate) struct SwapChain<'a> {
    k: &'a DMatrix<f64>,
    pub(crate) members: Vec<usize>,
    pub(crate) inv: DMatrix<f64>,
}

impl<'a> SwapChain<'a> {
    /// `None` when `K_ZZ` is numerically singular.
    pub(crate) fn new(k: &'a DMatrix<f64>, members: Vec<usize>) -> Result<Option<Self>, DppError> {
        let mut chain = Self { k, members, inv: DMatrix::zeros(0, 0) };
        Ok(if chain.refresh()? { Some(chain) } else { None })
    }

    fn refresh(&mut self) -> Result<bool, DppError> {
        let a = principal(self.k, &self.members);
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        match LowerFactor::factor(&a, 0.0) {
            Ok(f) => {
                let m = self.members.len();
                let mut inv = DMatrix::zeros(m, m);
                let mut e = vec![0.0; m];
                for j in 0..m {
                    e.iter_mut().for_each(|v| *v = 0.0);
                    e[j] = 1.0;
                    let col = f.solve(&e);
                    inv.column_mut(j).copy_from_slice(&col);
                }
                self.inv = inv;
                Ok(true)
            }
            Err(p) if p.value < -1e-10 * scale => Err(DppError::NotPsd { index: self.members[p.index], value: p.value }),
            Err(_) => Ok(false),
        }
    }

    /// `det(K_{Z'}) / det(K_Z)` for `Z' = Z − members[p] + j`.
    pub(crate) fn ratio(&self, p: usize, j: usize) -> f64 {
        let m = self.members.len();
        let ipp = self.inv[(p, p)];
        // bᵀ A⁻¹_{-p,-p} b − (A⁻¹_{p,-p} b)² / A⁻¹_pp
        let mut quad = 0.0;
        let mut cross = 0.0;
        for a in 0..m {
            if a == p {
                continue;
            }
            let ba = self.k[(self.members[a], j)];
            cross += self.inv[(p, a)] * ba;
            let mut row = 0.0;
            for b in 0..m {
                if b != p {
                    row += self.inv[(a, b)] * self.k[(self.members[b], j)];
                }
            }
            quad += ba * row;
        }
        let schur = self.k[(j, j)] - (quad - cross * cross / ipp);
        ipp * schur
    }

    /// Replaces `members[p]` by `j`, updating the inverse by a downdate
    /// followed by a bordered update.
    pub(crate) fn swap(&mut self, p: usize, j: usize, accepted: usize) -> Result<bool, DppError> {
        let m = self.members.len();
        let ipp = self.inv[(p, p)];
        let keep: Vec<usize> = (0..m).filter(|&a| a != p).collect();
        let mut reduced = DMatrix::from_fn(m - 1, m - 1, |a, b| {
            let (ia, ib) = (keep[a], keep[b]);
            self.inv[(ia, ib)] - self.inv[(ia, p)] * self.inv[(p, ib)] / ipp
        });
        let mut members: Vec<usize> = keep.iter().map(|&a| self.members[a]).collect();
        let b: Vec<f64> = members.iter().map(|&i| self.k[(i, j)]).collect();
        let c: Vec<f64> = (0..m - 1).map(|a| (0..m - 1).map(|bb| reduced[(a, bb)] * b[bb]).sum()).collect();
        let schur = self.k[(j, j)] - b.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>();
        members.push(j);
        self.members = members;
        if !(schur > 0.0) || accepted % REFRESH_EVERY == 0 {
            return self.refresh();
        }
        let mut inv = DMatrix::zeros(m, m);
        for a in 0..m - 1 {
            for bb in 0..m - 1 {
                reduced[(a, bb)] += c[a] * c[bb] / schur;
            }
        }
        inv.view_mut((0, 0), (m - 1, m - 1)).copy_from(&reduced);
        for a in 0..m - 1 {
            inv[(a, m - 1)] = -c[a] / schur;
            inv[(m - 1, a)] = -c[a] / schur;
        }
        inv[(m - 1, m - 1)] = 1.0 / schur;
        self.inv = inv;
        Ok(true)
    }
}

/// Swap-chain M-DPP sampler started from a uniformly random subset.
///
/// If the initial subset is numerically singular a new one is drawn, up to
/// a fixed number of attempts, after which [`DppError::Degenerate`] is
/// returned.
pub fn dpp_mcmc_sample<R: Rng + ?Sized>(
    k: &DMatrix<f64>,
    m: usize,
    steps: usize,
    rng: &mut R,
) -> Result<DppSample, DppError> {
    let n = check_shape(k, m)?;
    if steps == 0 {
        return Err(DppError::ZeroSteps);
    }
    let mut chain = None;
    for _ in 0..100 {
        let start = index::sample(rng, n, m).into_vec();
        if let Some(c) = SwapChain::new(k, start)? {
            chain = Some(c);
            break;
        }
    }
    let mut chain = chain.ok_or(DppError::Degenerate(m))?;
    let mut inside = vec![false; n];
    for &i in &chain.members {
        inside[i] = true;
    }
    let mut accepted = 0usize;
    if m < n {
        for _ in 0..steps {
            let p = rng.random_range(0..m);
            let mut r = rng.random_range(0..n - m);
            // r-th index not in the subset
            let mut j = 0;
            loop {
                if !inside[j] {
                    if r == 0 {
                        break;
                    }
                    r -= 1;
                }
                j += 1;
            }
            let ratio = chain.ratio(p, j);
            let u: f64 = rng.random();
            if ratio > 0.0 && u < ratio.min(1.0) {
                accepted += 1;
                inside[chain.members[p]] = false;
                inside[j] = true;
                if !chain.swap(p, j, accepted)? {
                    return Err(DppError::Degenerate(m));
                }
            }
        }
    }
    let mut indices = chain.members;
    indices.sort_unstable();
    let log_det = principal_log_det(k, &indices);
    Ok(DppSample { indices, log_det, chain_steps: steps })
}

/// Greedy selection maximizing the Nyström residual one point at a time
/// (pivoted partial Cholesky). Ties go to the lowest index.
pub fn greedy_max_residual(k: &DMatrix<f64>, m: usize) -> Result<DppSample, DppError> {
    let n = check_shape(k, m)?;
    let mut residual: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
    let mut taken = vec![false; n];
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best = None;
        for i in 0..n {
            if !taken[i] && best.is_none_or(|b: usize| residual[i] > residual[b]) {
                best = Some(i);
            }
        }
        let p = best.expect("m <= n");
        taken[p] = true;
        chosen.push(p);
        let piv = residual[p];
        if piv > 1e-12 * k[(p, p)].abs().max(f64::MIN_POSITIVE) {
            let s = piv.sqrt();
            let col: Vec<f64> = (0..n)
                .map(|i| (k[(i, p)] - cols.iter().map(|c| c[i] * c[p]).sum::<f64>()) / s)
                .collect();
            for i in 0..n {
                residual[i] -= col[i] * col[i];
            }
            cols.push(col);
        }
    }
    chosen.sort_unstable();
    let log_det = principal_log_det(k, &chosen);
    Ok(DppSample { indices: chosen, log_det, chain_steps: 0 })
}

/// Subset selection used by the policies: all points when `m ≥ n`, exact
/// enumeration for small `n`, the swap chain otherwise, and greedy
/// max-residual selection whenever the DPP is degenerate.
pub fn select_subset<R: Rng + ?Sized>(
    k: &DMatrix<f64>,
    m: usize,
    steps: Option<usize>,
    rng: &mut R,
) -> Result<DppSample, DppError> {
    let n = k.nrows();
    if m >= n {
        let indices: Vec<usize> = (0..n).collect();
        let log_det = principal_log_det(k, &indices);
        return Ok(DppSample { indices, log_det, chain_steps: 0 });
    }
    let drawn = if n <= EXACT_MAX_N {
        dpp_exact_sample(k, m, rng)
    } else {
        dpp_mcmc_sample(k, m, steps.unwrap_or_else(|| default_mcmc_steps(n)), rng)
    };
    match drawn {
        Err(DppError::Degenerate(_)) => {
            log::debug!("degenerate {m}-DPP over {n} points, using greedy selection");
            greedy_max_residual(k, m)
        }
        other => other,
    }
}

/// `Q_t = max(1, ceil(c·(ln t)^d))`, capped at `available`.
pub fn query_budget(t: usize, d: usize, c: f64, available: usize) -> usize {
    let t = t.max(1) as f64;
    let raw = (c * t.ln().powi(d as i32)).ceil();
    let q = if raw.is_finite() && raw >= 1.0 { raw as usize } else { 1 };
    q.min(available)
}
