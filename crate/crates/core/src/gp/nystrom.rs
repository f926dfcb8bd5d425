use nalgebra::DMatrix;

use super::{GpError, KernelSpec, Point};

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix, dropping
/// eigenvalues below `rcond · λ_max`.
pub fn pseudo_inverse(sym: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let n = sym.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = sym.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cutoff = rcond * lmax;
    let mut out = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > cutoff && l.abs() > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

/// Pivots with residual variance at or below this fraction of the kernel
/// amplitude are treated as already spanned.
const PIVOT_TOL: f64 = 1e-10;

/// `tr(K_XX − K_XS K_SS⁺ K_SX)` where `subset` indexes the rows of `points`
/// forming `S`.
///
/// Computed by a pivoted Cholesky factorization of `K_SS`, carrying the
/// residual diagonal of every point in `X` along. The cutoff is tied to the
/// kernel amplitude rather than to `λ_max(K_SS)`, so growing `S` never
/// discards a direction that a smaller `S` kept. [`pseudo_inverse`] gives
/// the same value on well-conditioned `K_SS`.
pub fn nystrom_residual_trace(points: &[Point], subset: &[usize], spec: &KernelSpec) -> Result<f64, GpError> {
    for p in points {
        spec.check_point(p)?;
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= points.len()) {
        return Err(GpError::InvalidDataset(format!("subset index {bad} out of range for {} points", points.len())));
    }
    let n = points.len();
    let mut resid = vec![spec.amplitude_sq; n];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut open: Vec<usize> = subset.to_vec();
    open.sort_unstable();
    open.dedup();
    while !open.is_empty() {
        let (pos, piv) = open.iter().enumerate().fold((0, open[0]), |best, (k, &i)| if resid[i] > resid[best.1] { (k, i) } else { best });
        if resid[piv] <= PIVOT_TOL * spec.amplitude_sq {
            break;
        }
        let root = resid[piv].sqrt();
        let row: Vec<f64> = (0..n)
            .map(|i| (spec.eval(&points[i], &points[piv]) - rows.iter().map(|r| r[i] * r[piv]).sum::<f64>()) / root)
            .collect();
        for (r, v) in resid.iter_mut().zip(&row) {
            *r -= v * v;
        }
        rows.push(row);
        open.swap_remove(pos);
    }
    let residual: f64 = resid.iter().sum();
    if residual < -1e-8 {
        log::warn!("Nyström residual trace {residual:e} clipped to 0");
    }
    Ok(residual.max(0.0))
}
