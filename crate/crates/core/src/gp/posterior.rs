use nalgebra::{DMatrix, DVector};

use super::linalg::LowerFactor;
use super::{gram, Dataset, GpError, KernelSpec, Point};

/// Variance clips larger than this are reported through `log::warn!`.
pub const VARIANCE_CLIP_REPORT: f64 = 1e-8;

/// Relative jitter levels tried in order when factorizing `K + Σ`.
const JITTER_LADDER: [f64; 3] = [0.0, 1e-9, 1e-6];

/// Fitted GP posterior; immutable once built.
///
/// `cross_scale`, when present, multiplies `k(x, xᵢ)` for every query point.
/// Plain heteroscedastic regression leaves it empty; the weighted and
/// time-discounted baselines use it together with a pre-scaled Gram matrix.
#[derive(Debug, Clone)]
pub struct Posterior {
    kernel: KernelSpec,
    basis: Vec<Point>,
    cross_scale: Option<Vec<f64>>,
    factor: LowerFactor,
    dual_weights: Vec<f64>,
    logdet_k_plus_sigma: f64,
    logdet_sigma: f64,
    jitter: f64,
}

pub fn fit_posterior(data: &Dataset, spec: &KernelSpec) -> Result<Posterior, GpError> {
    spec.validate()?;
    data.validate(spec.dim)?;
    let k = gram(&data.inputs, spec);
    fit_inner(spec, data.inputs.clone(), k, &data.outputs, &data.noise_vars, None)
}

/// Fits with an explicit prior Gram matrix over `data.inputs` and a per-point
/// scale applied to the cross-covariance `k(x, xᵢ)` at query time.
pub fn fit_posterior_scaled(
    data: &Dataset,
    spec: &KernelSpec,
    prior_gram: DMatrix<f64>,
    cross_scale: Vec<f64>,
) -> Result<Posterior, GpError> {
    spec.validate()?;
    data.validate(spec.dim)?;
    let n = data.len();
    if prior_gram.nrows() != n || prior_gram.ncols() != n || cross_scale.len() != n {
        return Err(GpError::InvalidDataset(format!(
            "prior gram {}x{} / cross scale {} do not match {n} observations",
            prior_gram.nrows(),
            prior_gram.ncols(),
            cross_scale.len()
        )));
    }
    fit_inner(spec, data.inputs.clone(), prior_gram, &data.outputs, &data.noise_vars, Some(cross_scale))
}

fn fit_inner(
    spec: &KernelSpec,
    basis: Vec<Point>,
    mut k: DMatrix<f64>,
    outputs: &[f64],
    noise_vars: &[f64],
    cross_scale: Option<Vec<f64>>,
) -> Result<Posterior, GpError> {
    for (i, v) in noise_vars.iter().enumerate() {
        k[(i, i)] += v;
    }
    let mut last = None;
    for rel in JITTER_LADDER {
        let jitter = rel * spec.amplitude_sq;
        match LowerFactor::factor(&k, jitter) {
            Ok(factor) => {
                let dual_weights = factor.solve(outputs);
                let logdet_k_plus_sigma = factor.logdet();
                let logdet_sigma = noise_vars.iter().map(|v| v.ln()).sum();
                if jitter > 0.0 {
                    log::debug!("posterior factorization needed jitter {jitter:e}");
                }
                return Ok(Posterior {
                    kernel: *spec,
                    basis,
                    cross_scale,
                    factor,
                    dual_weights,
                    logdet_k_plus_sigma,
                    logdet_sigma,
                    jitter,
                });
            }
            Err(p) => last = Some((p, jitter)),
        }
    }
    let (p, jitter) = last.expect("jitter ladder is non-empty");
    Err(GpError::Factorization { index: p.index, pivot: p.value, jitter })
}

impl Posterior {
    /// Posterior of the zero-mean prior with no data.
    pub fn prior(spec: &KernelSpec) -> Self {
        Self {
            kernel: *spec,
            basis: Vec::new(),
            cross_scale: None,
            factor: LowerFactor::factor(&DMatrix::zeros(0, 0), 0.0).expect("empty factor"),
            dual_weights: Vec::new(),
            logdet_k_plus_sigma: 0.0,
            logdet_sigma: 0.0,
            jitter: 0.0,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn basis(&self) -> &[Point] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.dual_weights
    }

    /// Lower Cholesky factor of `K + Σ` (plus any jitter that was needed).
    pub fn chol(&self) -> DMatrix<f64> {
        self.factor.to_matrix()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn logdet_k_plus_sigma(&self) -> f64 {
        self.logdet_k_plus_sigma
    }

    pub fn logdet_sigma(&self) -> f64 {
        self.logdet_sigma
    }

    /// `log(|Σ + K| / |Σ|)`.
    pub fn logdet_ratio(&self) -> f64 {
        if self.basis.is_empty() {
            return 0.0;
        }
        self.logdet_k_plus_sigma - self.logdet_sigma
    }

    fn cross(&self, x: &[f64], out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(&self.basis) {
            *o = self.kernel.eval(x, b);
        }
        if let Some(scale) = &self.cross_scale {
            for (o, s) in out.iter_mut().zip(scale) {
                *o *= s;
            }
        }
    }

    /// Mean and variance at `x`; the variance is clipped at zero.
    pub fn eval(&self, x: &[f64]) -> (f64, f64) {
        let mut buf = vec![0.0; self.basis.len()];
        self.eval_with(x, &mut buf)
    }

    fn eval_with(&self, x: &[f64], buf: &mut [f64]) -> (f64, f64) {
        self.cross(x, buf);
        let mean = buf.iter().zip(&self.dual_weights).map(|(k, w)| k * w).sum();
        self.factor.forward_solve_in_place(buf);
        let explained: f64 = buf.iter().map(|v| v * v).sum();
        let var = self.kernel.amplitude_sq - explained;
        (mean, clip_variance(var))
    }

    /// Checked variant of [`Posterior::eval`].
    pub fn posterior_eval(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        self.kernel.check_point(x)?;
        Ok(self.eval(x))
    }

    /// Means and variances at many points, reusing one scratch buffer.
    pub fn eval_many(&self, xs: &[Point]) -> Vec<(f64, f64)> {
        let mut buf = vec![0.0; self.basis.len()];
        xs.iter().map(|x| self.eval_with(x, &mut buf)).collect()
    }

    /// Joint posterior mean vector and covariance matrix over `grid`.
    pub fn joint(&self, grid: &[Point]) -> (DVector<f64>, DMatrix<f64>) {
        let m = grid.len();
        let n = self.basis.len();
        let mut mean = DVector::zeros(m);
        let mut v = DMatrix::zeros(n, m);
        let mut buf = vec![0.0; n];
        for (j, x) in grid.iter().enumerate() {
            self.cross(x, &mut buf);
            mean[j] = buf.iter().zip(&self.dual_weights).map(|(k, w)| k * w).sum();
            self.factor.forward_solve_in_place(&mut buf);
            v.column_mut(j).copy_from_slice(&buf);
        }
        let mut cov = gram(grid, &self.kernel);
        if n > 0 {
            cov -= v.transpose() * &v;
        }
        (mean, cov)
    }
}

fn clip_variance(var: f64) -> f64 {
    if var < 0.0 {
        if -var > VARIANCE_CLIP_REPORT {
            log::warn!("posterior variance clipped from {var:e} to 0");
        }
        0.0
    } else {
        var
    }
}
