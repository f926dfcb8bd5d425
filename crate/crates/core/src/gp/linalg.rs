//! Dense lower-triangular factorization helpers.
//!
//! The factor is stored row-major so that the inner products in both the
//! factorization and the forward substitutions run over contiguous memory.

use nalgebra::DMatrix;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`, stored row-major.
#[derive(Debug, Clone)]
pub struct LowerFactor {
    n: usize,
    data: Vec<f64>,
}

/// Pivot that failed during factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailedPivot {
    pub index: usize,
    pub value: f64,
}

impl LowerFactor {
    /// Factorizes the symmetric matrix `a` (only the lower triangle is read),
    /// with `jitter` added to every diagonal entry.
    pub fn factor(a: &DMatrix<f64>, jitter: f64) -> Result<Self, FailedPivot> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (row_i, row_j) = if i == j {
                    let r = &data[i * n..i * n + j];
                    (r, r)
                } else {
                    let (head, tail) = data.split_at(i * n);
                    (&tail[..j], &head[j * n..j * n + j])
                };
                let dot: f64 = row_i.iter().zip(row_j).map(|(p, q)| p * q).sum();
                if i == j {
                    let pivot = a[(i, i)] + jitter - dot;
                    if !(pivot > 0.0) || !pivot.is_finite() {
                        return Err(FailedPivot { index: i, value: pivot });
                    }
                    data[i * n + i] = pivot.sqrt();
                } else {
                    data[i * n + j] = (a[(i, j)] - dot) / data[j * n + j];
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..i * self.n + i + 1]
    }

    /// Solves `L v = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let dot: f64 = row[..i].iter().zip(&b[..i]).map(|(p, q)| p * q).sum();
            b[i] = (b[i] - dot) / row[i];
        }
    }

    /// Solves `Lᵀ v = b` in place.
    pub fn backward_solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            b[i] /= self.data[i * self.n + i];
            let bi = b[i];
            let row = &self.data[i * self.n..i * self.n + i];
            for (bj, lij) in b[..i].iter_mut().zip(row) {
                *bj -= lij * bi;
            }
        }
    }

    /// Solves `(L Lᵀ) v = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut v = b.to_vec();
        self.forward_solve_in_place(&mut v);
        self.backward_solve_in_place(&mut v);
        v
    }

    /// `log det(L Lᵀ)`.
    pub fn logdet(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.data[i * self.n + j] } else { 0.0 })
    }
}
