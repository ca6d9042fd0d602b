//! Sparse rectangular systems and an LSQR solver for `min ||A v - b||²`.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dist, norm, LinalgError};

/// Coordinate-format system `A v = b` with `rows × cols` coefficients.
/// Duplicate `(row, col)` triplets are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, triplets: Vec::new(), rhs: vec![0.0; rows] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Adds `value` at `(row, col)`.
    ///
    /// # Panics
    /// If the position lies outside the declared shape.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.rows && col < self.cols, "entry ({row}, {col}) outside {}x{}", self.rows, self.cols);
        self.triplets.push((row, col, value));
    }

    pub fn set_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] = value;
    }

    /// Appends a fresh row and returns its index.
    pub fn add_row(&mut self, entries: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.rows;
        self.rows += 1;
        self.rhs.push(rhs);
        for &(col, value) in entries {
            self.push(row, col, value);
        }
        row
    }

    /// Copy of the coefficient pattern with a different right-hand side.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self, LinalgError> {
        if rhs.len() != self.rows {
            return Err(LinalgError::DimensionMismatch { expected: self.rows, got: rhs.len() });
        }
        Ok(Self { rhs, ..self.clone() })
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.rows, self.cols, &self.triplets)
    }

    /// `||A v - b||`
    pub fn residual_norm(&self, v: &[f64]) -> f64 {
        let mut av = vec![0.0; self.rows];
        self.to_csr().mul_add(v, &mut av);
        dist(&av, &self.rhs)
    }

    /// `A v - b` row by row.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut av = vec![0.0; self.rows];
        self.to_csr().mul_add(v, &mut av);
        av.iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { rows, cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y += A x`
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.rows) {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *yr += self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(&c, v)| v * x[c]).sum::<f64>();
        }
    }

    /// `x += Aᵀ y`
    pub fn tmul_add(&self, y: &[f64], x: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate().take(self.rows) {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                x[self.col_idx[idx]] += self.values[idx] * yr;
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub const DEFAULT_LSQR_TOL: f64 = 1e-10;

/// `10 * (rows + cols)`
pub fn default_lsqr_iterations(system: &SparseSystem) -> usize {
    10 * (system.rows() + system.cols())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqrSolution {
    pub solution: Vec<f64>,
    /// `||A v - b||` recomputed from the returned iterate.
    pub residual_norm: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the stopping tests passed.
    pub converged: bool,
    /// The method's running residual estimate, one entry per iteration
    /// (entry 0 is `||b||`).
    pub residual_history: Vec<f64>,
}

/// Paige–Saunders LSQR without damping, with `atol = btol = tol`.
///
/// Stops when `||r|| <= tol (||b|| + ||A|| ||v||)` or
/// `||Aᵀ r|| <= tol ||A|| ||r||`. Started from zero, the iterates approach the
/// minimum-norm least-squares solution.
pub fn lsqr(system: &SparseSystem, tol: f64, max_iter: usize) -> Result<LsqrSolution, LinalgError> {
    let (m, n) = (system.rows(), system.cols());
    if m == 0 || n == 0 {
        return Err(LinalgError::DimensionMismatch { expected: 1, got: 0 });
    }
    if !(tol > 0.0) || !system.rhs().iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let a = system.to_csr();
    let b = system.rhs();

    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    let mut history = vec![bnorm];
    if bnorm == 0.0 {
        return Ok(LsqrSolution { solution: x, residual_norm: 0.0, iterations: 0, converged: true, residual_history: history });
    }

    let mut u: Vec<f64> = b.iter().map(|v| v / bnorm).collect();
    let mut v = vec![0.0; n];
    a.tmul_add(&u, &mut v);
    let mut alpha = norm(&v);
    if alpha == 0.0 {
        // Aᵀ b = 0: zero is already a least-squares solution.
        return Ok(LsqrSolution { solution: x, residual_norm: bnorm, iterations: 0, converged: true, residual_history: history });
    }
    v.iter_mut().for_each(|e| *e /= alpha);
    let mut w = v.clone();

    let mut phibar = bnorm;
    let mut rhobar = alpha;
    let mut anorm_sq = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    for itn in 1..=max_iter {
        iterations = itn;
        // Bidiagonalisation: beta u = A v - alpha u
        u.iter_mut().for_each(|e| *e *= -alpha);
        a.mul_add(&v, &mut u);
        let beta = norm(&u);
        if beta > 0.0 {
            u.iter_mut().for_each(|e| *e /= beta);
        }
        anorm_sq += alpha * alpha + beta * beta;

        // alpha v = Aᵀ u - beta v
        v.iter_mut().for_each(|e| *e *= -beta);
        a.tmul_add(&u, &mut v);
        alpha = norm(&v);
        if alpha > 0.0 {
            v.iter_mut().for_each(|e| *e /= alpha);
        }

        // Plane rotation eliminating beta.
        let rho = libm::hypot(rhobar, beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        let step = phi / rho;
        let w_scale = theta / rho;
        for ((xi, wi), vi) in x.iter_mut().zip(w.iter_mut()).zip(&v) {
            *xi += step * *wi;
            *wi = vi - w_scale * *wi;
        }
        history.push(phibar);

        let anorm = libm::sqrt(anorm_sq);
        let rnorm = phibar;
        let arnorm = alpha * (c * phibar).abs();
        let xnorm = norm(&x);
        if rnorm <= tol * (bnorm + anorm * xnorm) || arnorm <= tol * anorm * rnorm || alpha == 0.0 {
            converged = true;
            break;
        }
    }

    let residual_norm = system.residual_norm(&x);
    Ok(LsqrSolution { solution: x, residual_norm, iterations, converged, residual_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{solve_dense, DenseMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_sparse(rows: &[Vec<f64>], b: &[f64]) -> SparseSystem {
        let mut s = SparseSystem::new(rows.len(), rows[0].len());
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    s.push(r, c, v);
                }
            }
            s.set_rhs(r, b[r]);
        }
        s
    }

    #[test]
    fn identity_system() {
        let mut s = SparseSystem::new(3, 3);
        for i in 0..3 {
            s.push(i, i, 1.0);
            s.set_rhs(i, (i + 1) as f64);
        }
        let sol = lsqr(&s, DEFAULT_LSQR_TOL, default_lsqr_iterations(&s)).unwrap();
        assert!(sol.converged);
        for (i, v) in sol.solution.iter().enumerate() {
            assert!((v - (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn minimum_norm_for_single_row() {
        let mut s = SparseSystem::new(1, 2);
        s.push(0, 0, 1.0);
        s.push(0, 1, 1.0);
        s.set_rhs(0, 2.0);
        let sol = lsqr(&s, DEFAULT_LSQR_TOL, 100).unwrap();
        assert!((sol.solution[0] - 1.0).abs() < 1e-12 && (sol.solution[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut s = SparseSystem::new(1, 1);
        s.push(0, 0, 1.0);
        s.push(0, 0, 1.0);
        s.set_rhs(0, 4.0);
        let sol = lsqr(&s, DEFAULT_LSQR_TOL, 10).unwrap();
        assert!((sol.solution[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.to_csr().nnz(), 1);
    }

    #[test]
    fn recovers_planted_solution_of_tall_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let planted: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = rows.iter().map(|r| crate::linalg::dot(r, &planted)).collect();
        let s = dense_to_sparse(&rows, &b);
        let sol = lsqr(&s, DEFAULT_LSQR_TOL, default_lsqr_iterations(&s)).unwrap();
        assert!(sol.converged);
        assert!(dist(&sol.solution, &planted) <= 1e-8 * norm(&planted));
    }

    #[test]
    fn zero_rhs_and_bad_inputs() {
        let mut s = SparseSystem::new(2, 2);
        s.push(0, 0, 1.0);
        let sol = lsqr(&s, 1e-10, 10).unwrap();
        assert_eq!(sol.solution, vec![0.0, 0.0]);
        assert!(lsqr(&s, 0.0, 10).is_err());
        assert!(lsqr(&SparseSystem::new(0, 2), 1e-10, 10).is_err());
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sol = lsqr(&dense_to_sparse(&rows, &b), 1e-14, 2).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
    }

    #[test]
    #[should_panic]
    fn out_of_range_entry_panics() {
        SparseSystem::new(2, 2).push(2, 0, 1.0);
    }

    fn square_system() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|n| {
            (Just(n), proptest::collection::vec(-1.0f64..1.0, n * n), proptest::collection::vec(-5.0f64..5.0, n))
        })
    }

    proptest! {
        #[test]
        fn agrees_with_dense_solve_on_square_systems((n, entries, b) in square_system()) {
            let mut rows = vec![vec![0.0; n]; n];
            let mut dense = DenseMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    let v = entries[i * n + j] + if i == j { n as f64 + 1.0 } else { 0.0 };
                    rows[i][j] = v;
                    dense[(i, j)] = v;
                }
            }
            let s = dense_to_sparse(&rows, &b);
            let sol = lsqr(&s, DEFAULT_LSQR_TOL, default_lsqr_iterations(&s)).unwrap();
            let exact = solve_dense(&dense, &b).unwrap();
            for (a, e) in sol.solution.iter().zip(&exact) {
                prop_assert!((a - e).abs() <= 1e-8 * (1.0 + e.abs()));
            }
        }

        #[test]
        fn residual_estimates_never_increase(seed in any::<u64>(), rows in 3usize..25, cols in 2usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = SparseSystem::new(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    if rng.random_bool(0.4) {
                        s.push(r, c, rng.random_range(-1.0..1.0));
                    }
                }
                s.set_rhs(r, rng.random_range(-1.0..1.0));
            }
            let sol = lsqr(&s, DEFAULT_LSQR_TOL, default_lsqr_iterations(&s)).unwrap();
            for pair in sol.residual_history.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
            }
        }
    }
}
