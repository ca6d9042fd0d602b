//! Dense helpers for the small `p`-dimensional vectors and matrices used by
//! the solvers. Vectors are plain `[f64]` slices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is singular or too ill-conditioned to solve")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in input")]
    NonFinite,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Euclidean distance `||a - b||`.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch { expected: n, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        self.data.chunks_exact(self.n.max(1)).take(self.n).map(|row| dot(row, x)).collect()
    }

    /// `self += alpha * v vᵀ`
    pub fn add_outer(&mut self, alpha: f64, v: &[f64]) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += alpha * v[i] * v[j];
            }
        }
    }

    /// `self += alpha * I`
    pub fn add_diagonal(&mut self, alpha: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += alpha;
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &DenseMatrix) {
        debug_assert_eq!(self.n, other.n);
        axpy(alpha, &other.data, &mut self.data);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { n: self.n, data: scale(alpha, &self.data) }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Solves `A x = b` by LU with partial pivoting.
///
/// Rejects matrices whose pivots collapse below `1e-13 * max|A|`, and any
/// solution whose residual exceeds `1e-10 * (1 + ||b||)`.
pub fn solve_dense(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
    }
    if !all_finite(&a.data) || !all_finite(b) {
        return Err(LinalgError::NonFinite);
    }
    let scale = a.max_abs();
    if n == 0 {
        return Ok(Vec::new());
    }
    if scale == 0.0 {
        return Err(LinalgError::Singular);
    }
    let pivot_floor = 1e-13 * scale;

    let mut lu = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, lu[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= pivot_floor {
            return Err(LinalgError::Singular);
        }
        if pivot_row != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot_row * n + j);
            }
            x.swap(col, pivot_row);
        }
        let pivot = lu[col * n + col];
        for r in col + 1..n {
            let factor = lu[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            lu[r * n + col] = 0.0;
            for j in col + 1..n {
                lu[r * n + j] -= factor * lu[col * n + j];
            }
            x[r] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|j| lu[row * n + j] * x[j]).sum();
        x[row] = (x[row] - tail) / lu[row * n + row];
    }

    let residual = dist(&a.mul_vec(&x), b);
    if !residual.is_finite() || residual > 1e-10 * (1.0 + norm(b)) {
        return Err(LinalgError::Singular);
    }
    Ok(x)
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration on a fixed, generic starting vector.
pub fn max_eigenvalue_psd(m: &DenseMatrix) -> f64 {
    let n = m.dim();
    if n == 0 || m.max_abs() == 0.0 {
        return 0.0;
    }
    // Incommensurate weights: the start is orthogonal to the top eigenvector
    // only on a measure-zero set of matrices.
    let mut v: Vec<f64> =
        (0..n).map(|i| 1.0 + 0.618_033_988_749_895 * libm::sqrt(i as f64 + 1.0)).collect();
    let v_norm = norm(&v);
    v.iter_mut().for_each(|e| *e /= v_norm);

    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = m.mul_vec(&v);
        let w_norm = norm(&w);
        if w_norm == 0.0 {
            return lambda;
        }
        let next = dot(&v, &w);
        v = scale(1.0 / w_norm, &w);
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // One last Rayleigh quotient on the converged vector.
    dot(&v, &m.mul_vec(&v)).max(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_solve() {
        let a = DenseMatrix::identity(2);
        assert_eq!(solve_dense(&a, &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn diagonal_solve() {
        let a = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        assert_eq!(solve_dense(&a, &[2.0, 8.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn symmetric_solve_checked_by_substitution() {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let b = [3.0, 5.0];
        let x = solve_dense(&a, &b).unwrap();
        let back = [2.0 * x[0] + x[1], x[0] + 3.0 * x[1]];
        assert!((back[0] - b[0]).abs() < 1e-12 && (back[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn singular_is_an_error() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert_eq!(solve_dense(&a, &[1.0, 2.0]), Err(LinalgError::Singular));
        assert_eq!(solve_dense(&DenseMatrix::zeros(3), &[0.0; 3]), Err(LinalgError::Singular));
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        let a = DenseMatrix::identity(2);
        assert!(matches!(solve_dense(&a, &[1.0]), Err(LinalgError::DimensionMismatch { .. })));
        assert_eq!(solve_dense(&a, &[f64::NAN, 0.0]), Err(LinalgError::NonFinite));
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(max_eigenvalue_psd(&m), 1.0);
        // Top eigenvector (1,-1) is orthogonal to the all-ones vector.
        let m = DenseMatrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        assert!((max_eigenvalue_psd(&m) - 2.0).abs() < 1e-12);
        let m = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        assert!((max_eigenvalue_psd(&m) - 3.0).abs() < 1e-12);
    }

    fn system() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        prop::sample::select(vec![1usize, 2, 4]).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(-1.0f64..1.0, n * n),
                proptest::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn solve_then_multiply_back((n, entries, b) in system()) {
            let mut a = DenseMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = entries[i * n + j];
                }
                // diagonal dominance keeps the matrix well conditioned
                a[(i, i)] += n as f64 + 1.0;
            }
            let x = solve_dense(&a, &b).unwrap();
            prop_assert!(dist(&a.mul_vec(&x), &b) <= 1e-10 * (1.0 + norm(&b)));
        }
    }
}
