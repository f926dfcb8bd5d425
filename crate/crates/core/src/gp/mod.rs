//! Squared-exponential kernel and heteroscedastic GP regression.

mod kl;
pub mod linalg;
mod nystrom;
mod posterior;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kl::finite_kl;
pub use nystrom::{nystrom_residual_trace, pseudo_inverse};
pub use posterior::{fit_posterior, fit_posterior_scaled, Posterior, VARIANCE_CLIP_REPORT};

/// A point of the input domain.
pub type Point = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("inconsistent dataset: {0}")]
    InvalidDataset(String),
    #[error("factorization failed at pivot {index} (value {pivot:e}) after jitter {jitter:e}")]
    Factorization { index: usize, pivot: f64, jitter: f64 },
    #[error("covariance not positive definite: {0}")]
    Singular(String),
}

/// Parameters of `k(x, x') = amplitude_sq · exp(-‖x - x'‖² / (2 lengthscale²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub amplitude_sq: f64,
    pub lengthscale: f64,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(amplitude_sq: f64, lengthscale: f64, dim: usize) -> Result<Self, GpError> {
        let spec = Self { amplitude_sq, lengthscale, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.amplitude_sq > 0.0 && self.amplitude_sq.is_finite()) {
            return Err(GpError::InvalidKernel(format!("amplitude_sq must be > 0, got {}", self.amplitude_sq)));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(GpError::InvalidKernel(format!("lengthscale must be > 0, got {}", self.lengthscale)));
        }
        if self.dim == 0 {
            return Err(GpError::InvalidKernel("dim must be >= 1".into()));
        }
        Ok(())
    }

    /// Kernel value without dimension checks.
    #[inline]
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let sq: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
        self.amplitude_sq * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    pub fn check_point(&self, x: &[f64]) -> Result<(), GpError> {
        if x.len() != self.dim {
            return Err(GpError::Dimension { expected: self.dim, got: x.len() });
        }
        Ok(())
    }
}

pub fn se_kernel(x1: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64, GpError> {
    spec.check_point(x1)?;
    spec.check_point(x2)?;
    Ok(spec.eval(x1, x2))
}

pub fn kernel_matrix(points: &[Point], spec: &KernelSpec) -> Result<DMatrix<f64>, GpError> {
    for p in points {
        spec.check_point(p)?;
    }
    Ok(gram(points, spec))
}

pub(crate) fn gram(points: &[Point], spec: &KernelSpec) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.amplitude_sq;
        for j in 0..i {
            let v = spec.eval(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Observations with per-point noise variances and acquisition timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Point>,
    pub outputs: Vec<f64>,
    pub noise_vars: Vec<f64>,
    pub timestamps: Vec<usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, x: Point, y: f64, noise_var: f64, timestamp: usize) {
        self.inputs.push(x);
        self.outputs.push(y);
        self.noise_vars.push(noise_var);
        self.timestamps.push(timestamp);
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.outputs.clear();
        self.noise_vars.clear();
        self.timestamps.clear();
    }

    pub fn validate(&self, dim: usize) -> Result<(), GpError> {
        let n = self.inputs.len();
        if self.outputs.len() != n || self.noise_vars.len() != n || self.timestamps.len() != n {
            return Err(GpError::InvalidDataset(format!(
                "length mismatch: inputs {}, outputs {}, noise_vars {}, timestamps {}",
                n,
                self.outputs.len(),
                self.noise_vars.len(),
                self.timestamps.len()
            )));
        }
        for x in &self.inputs {
            if x.len() != dim {
                return Err(GpError::Dimension { expected: dim, got: x.len() });
            }
        }
        if let Some(v) = self.noise_vars.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(GpError::InvalidDataset(format!("noise variance must be > 0, got {v}")));
        }
        if let Some(y) = self.outputs.iter().find(|y| !y.is_finite()) {
            return Err(GpError::InvalidDataset(format!("non-finite output {y}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_at_coincident_points_is_amplitude() {
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        assert_eq!(se_kernel(&[1.3], &[1.3], &spec).unwrap(), 0.5);
    }

    #[test]
    fn kernel_closed_form() {
        // 0.5 · e^{-1/2}
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        let v = se_kernel(&[0.0], &[3.0], &spec).unwrap();
        assert!((v - 0.303_265_329_856_316_7).abs() < 1e-15);
    }

    #[test]
    fn kernel_decays_monotonically() {
        let spec = KernelSpec::new(1.0, 2.0, 2).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let v = spec.eval(&[0.0, 0.0], &[i as f64 * 0.5, -(i as f64) * 0.25]);
            assert!(v < prev || (v == 0.0 && prev == 0.0));
            assert!(v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-50);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let spec = KernelSpec::new(1.0, 1.0, 2).unwrap();
        assert_eq!(
            se_kernel(&[0.0], &[0.0, 1.0], &spec),
            Err(GpError::Dimension { expected: 2, got: 1 })
        );
        assert!(kernel_matrix(&[vec![0.0, 1.0], vec![2.0]], &spec).is_err());
    }

    #[test]
    fn invalid_kernel_rejected() {
        assert!(KernelSpec::new(0.0, 1.0, 1).is_err());
        assert!(KernelSpec::new(1.0, -1.0, 1).is_err());
        assert!(KernelSpec::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn kernel_matrix_shapes() {
        let spec = KernelSpec::new(0.5, 3.0, 1).unwrap();
        let k = kernel_matrix(&[vec![2.0]], &spec).unwrap();
        assert_eq!(k, DMatrix::from_element(1, 1, 0.5));

        let k = kernel_matrix(&[vec![1.0], vec![4.0], vec![1.0]], &spec).unwrap();
        assert!(k.determinant().abs() < 1e-12);
    }

    #[test]
    fn kernel_matrix_matches_entrywise_loop() {
        let spec = KernelSpec::new(0.7, 1.5, 2).unwrap();
        let pts = vec![vec![0.1, -0.3], vec![1.2, 0.4], vec![-0.8, 2.2], vec![0.5, 0.5]];
        let k = kernel_matrix(&pts, &spec).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d2: f64 = (0..2).map(|c| (pts[i][c] - pts[j][c]).powi(2)).sum();
                let expect = 0.7 * (-d2 / (2.0 * 1.5 * 1.5)).exp();
                assert!((k[(i, j)] - expect).abs() < 1e-15);
            }
        }
        let eig = k.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
    }

    #[test]
    fn dataset_validation() {
        let mut d = Dataset::new();
        d.push(vec![0.0], 1.0, 0.1, 1);
        assert!(d.validate(1).is_ok());
        d.noise_vars[0] = 0.0;
        assert!(d.validate(1).is_err());
        d.noise_vars[0] = 0.1;
        d.timestamps.push(3);
        assert!(d.validate(1).is_err());
    }
}
