#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sparq_core::env::{linspace, SyntheticRkhsEnv};
use sparq_core::{KernelSpec, Point};

pub fn reference_kernel() -> KernelSpec {
    KernelSpec::new(0.5, 3.0, 1).unwrap()
}

pub fn reference_env(sigma_sq: f64) -> SyntheticRkhsEnv {
    SyntheticRkhsEnv::evenly_spaced(-50.0, 50.0, 20, reference_kernel(), 5.0, 0.3, sigma_sq).unwrap()
}

pub fn grid(n: usize) -> Vec<Point> {
    linspace(-50.0, 50.0, n).into_iter().map(|v| vec![v]).collect()
}

fn se(a: &[f64], b: &[f64], k: &KernelSpec) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    k.amplitude_sq * (-d2 / (2.0 * k.lengthscale * k.lengthscale)).exp()
}

/// Posterior by explicit inversion of `K + Σ`.
pub struct DenseGp {
    xs: Vec<Point>,
    inv: DMatrix<f64>,
    alpha: DVector<f64>,
    kernel: KernelSpec,
    pub logdet_ratio: f64,
}

impl DenseGp {
    pub fn fit(xs: &[Point], ys: &[f64], noise: &[f64], kernel: &KernelSpec) -> Self {
        let n = xs.len();
        let mut a = DMatrix::from_fn(n, n, |i, j| se(&xs[i], &xs[j], kernel));
        for i in 0..n {
            a[(i, i)] += noise[i];
        }
        let det = a.determinant();
        let inv = a.try_inverse().unwrap_or_else(|| DMatrix::zeros(0, 0));
        let alpha = &inv * DVector::from_column_slice(ys);
        let logdet_ratio = if n == 0 { 0.0 } else { det.ln() - noise.iter().map(|v| v.ln()).sum::<f64>() };
        Self { xs: xs.to_vec(), inv, alpha, kernel: *kernel, logdet_ratio }
    }

    pub fn eval(&self, x: &[f64]) -> (f64, f64) {
        if self.xs.is_empty() {
            return (0.0, self.kernel.amplitude_sq);
        }
        let kx = DVector::from_fn(self.xs.len(), |i, _| se(x, &self.xs[i], &self.kernel));
        let mean = kx.dot(&self.alpha);
        let var = self.kernel.amplitude_sq - (kx.transpose() * &self.inv * &kx)[0];
        (mean, var.max(0.0))
    }

    pub fn beta(&self, delta: f64, b: f64) -> f64 {
        (2.0 * ((2.0 / delta).ln() + 0.5 * self.logdet_ratio)).sqrt() + b
    }

    pub fn scores(&self, beta: f64, cands: &[Point]) -> Vec<f64> {
        cands
            .iter()
            .map(|c| {
                let (m, v) = self.eval(c);
                m + beta * v.sqrt()
            })
            .collect()
    }
}

/// The chosen index must attain the oracle's best score up to `tol`.
pub fn assert_near_argmax(scores: &[f64], chosen: usize, tol: f64) {
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(scores[chosen] >= best - tol, "chosen score {} vs best {best}", scores[chosen]);
}
