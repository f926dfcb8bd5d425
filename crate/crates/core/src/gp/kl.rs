use nalgebra::DMatrix;

use super::linalg::LowerFactor;
use super::{GpError, Point, Posterior};

/// Jitter added to both marginal covariances before comparing them.
const KL_JITTER: f64 = 1e-9;

/// `KL(P ‖ Q)` between the finite-dimensional marginals of two posteriors on
/// `grid`.
pub fn finite_kl(p: &Posterior, q: &Posterior, grid: &[Point]) -> Result<f64, GpError> {
    if grid.is_empty() {
        return Err(GpError::InvalidDataset("KL grid must be non-empty".into()));
    }
    if p.kernel() != q.kernel() {
        return Err(GpError::InvalidKernel("posteriors use different kernels".into()));
    }
    for x in grid {
        p.kernel().check_point(x)?;
    }
    let m = grid.len();
    let (mu_p, cov_p) = p.joint(grid);
    let (mu_q, cov_q) = q.joint(grid);
    let lp = factor_jittered(&cov_p, "first")?;
    let lq = factor_jittered(&cov_q, "second")?;

    // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖_F²
    let lp_m = lp.to_matrix();
    let mut trace = 0.0;
    let mut col = vec![0.0; m];
    for j in 0..m {
        col.copy_from_slice(lp_m.column(j).as_slice());
        lq.forward_solve_in_place(&mut col);
        trace += col.iter().map(|v| v * v).sum::<f64>();
    }
    let mut diff: Vec<f64> = (&mu_q - &mu_p).iter().copied().collect();
    lq.forward_solve_in_place(&mut diff);
    let mahal: f64 = diff.iter().map(|v| v * v).sum();
    let kl = 0.5 * (trace + mahal - m as f64 + lq.logdet() - lp.logdet());
    Ok(kl.max(0.0))
}

fn factor_jittered(cov: &DMatrix<f64>, which: &str) -> Result<LowerFactor, GpError> {
    LowerFactor::factor(cov, KL_JITTER).map_err(|p| {
        GpError::Singular(format!("{which} marginal covariance: pivot {} = {:e}", p.index, p.value))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit_posterior, Dataset, KernelSpec};
    use nalgebra::DVector;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<Point> {
        (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn identical_posteriors_have_zero_kl() {
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        let mut d = Dataset::new();
        d.push(vec![1.0], 0.4, 0.1, 1);
        d.push(vec![-2.0], 0.1, 0.1, 1);
        let p = fit_posterior(&d, &spec).unwrap();
        let kl = finite_kl(&p, &p, &grid(10, -10.0, 10.0)).unwrap();
        assert!(kl.abs() < 1e-9);
    }

    #[test]
    fn empty_posteriors_have_zero_kl() {
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        let p = fit_posterior(&Dataset::new(), &spec).unwrap();
        let q = fit_posterior(&Dataset::new(), &spec).unwrap();
        assert!(finite_kl(&p, &q, &grid(7, -5.0, 5.0)).unwrap().abs() < 1e-9);
    }

    #[test]
    fn empty_grid_rejected() {
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        let p = Posterior::prior(&spec);
        assert!(finite_kl(&p, &p, &[]).is_err());
    }

    /// Two-Gaussian KL through explicit inverses and determinants.
    fn kl_oracle(mp: &DVector<f64>, sp: &DMatrix<f64>, mq: &DVector<f64>, sq: &DMatrix<f64>) -> f64 {
        let n = mp.len();
        let sp = sp + DMatrix::identity(n, n) * KL_JITTER;
        let sq = sq + DMatrix::identity(n, n) * KL_JITTER;
        let sq_inv = sq.clone().try_inverse().unwrap();
        let d = mq - mp;
        let tr = (&sq_inv * &sp).trace();
        let quad = (d.transpose() * &sq_inv * &d)[0];
        0.5 * (tr + quad - n as f64 + (sq.determinant() / sp.determinant()).ln())
    }

    #[test]
    fn sparse_vs_full_matches_explicit_formula() {
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        let xs: Vec<f64> = (0..10).map(|i| -9.0 + 2.0 * i as f64).collect();
        let mut full = Dataset::new();
        for (i, &x) in xs.iter().enumerate() {
            full.push(vec![x], (0.3 * x).sin() + 0.05 * (i as f64).cos(), 0.1, 1);
        }
        let mut sparse = Dataset::new();
        for i in [0, 3, 6, 9] {
            sparse.push(full.inputs[i].clone(), full.outputs[i], 0.1, 1);
        }
        let pf = fit_posterior(&full, &spec).unwrap();
        let ps = fit_posterior(&sparse, &spec).unwrap();
        // coarse grid keeps the marginal covariances well conditioned
        let g = grid(20, -60.0, 60.0);
        let kl = finite_kl(&ps, &pf, &g).unwrap();
        let (ms, ss) = ps.joint(&g);
        let (mf, sf) = pf.joint(&g);
        let oracle = kl_oracle(&ms, &ss, &mf, &sf);
        assert!((kl - oracle).abs() < 1e-6 * oracle.max(1.0), "{kl} vs {oracle}");
        assert!(kl > 0.0);
    }
}
