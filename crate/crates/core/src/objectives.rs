//! Local objectives `f_i`, their synthetic data, and the pooled optimum.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, dot, norm, solve_dense, DenseMatrix, LinalgError};
use crate::sparse::{lsqr, SparseSystem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("objective has no closed-form proximal step; use the first-order x-update")]
    ProxUnsupported,
    #[error("dataset needs at least one sample")]
    EmptyDataset,
    #[error("sample {index} has {got} features, expected {expected}")]
    FeatureCount { index: usize, expected: usize, got: usize },
    #[error("logistic target {0} is not ±1")]
    InvalidLabel(f64),
    #[error("no objectives supplied")]
    NoObjectives,
    #[error("optimum search stopped with gradient norm {grad_norm:e}")]
    NotConverged { grad_norm: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Samples `(o_j, t_j)` held privately by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, ObjectiveError> {
        let dim = inputs.first().map(Vec::len).ok_or(ObjectiveError::EmptyDataset)?;
        if targets.len() != inputs.len() {
            return Err(ObjectiveError::FeatureCount { index: targets.len(), expected: inputs.len(), got: targets.len() });
        }
        let mut flat = Vec::with_capacity(dim * inputs.len());
        for (index, row) in inputs.iter().enumerate() {
            if row.len() != dim {
                return Err(ObjectiveError::FeatureCount { index, expected: dim, got: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Ok(Self { dim, inputs: flat, targets })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs.chunks_exact(self.dim).zip(self.targets.iter().copied())
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `(1/b) Σ_j o_j o_jᵀ`
    pub fn second_moment(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.dim);
        let w = 1.0 / self.len() as f64;
        for (o, _) in self.samples() {
            g.add_outer(w, o);
        }
        g
    }
}

/// A smooth local loss `f_i: R^p -> R`.
pub trait LocalObjective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// An upper bound on the Lipschitz constant of the gradient.
    fn lipschitz_bound(&self) -> f64;

    /// `argmin_x f(x) + (rho/2) ||z - x + y/rho||²`
    fn prox(&self, z: &[f64], y: &[f64], rho: f64) -> Result<Vec<f64>, ObjectiveError>;

    /// For quadratics, `(H, g)` with `∇f(x) = H x - g`.
    fn quadratic_model(&self) -> Option<(DenseMatrix, Vec<f64>)> {
        None
    }
}

/// Least squares: `f(x) = (1/b) Σ_j (xᵀ o_j - t_j)²`.
///
/// No ℓ2 term is added despite the usual "ridge" name.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    data: Dataset,
    moment: DenseMatrix,
    cross: Vec<f64>,
    lipschitz: f64,
}

impl Ridge {
    pub fn new(data: Dataset) -> Self {
        let moment = data.second_moment();
        let w = 1.0 / data.len() as f64;
        let mut cross = vec![0.0; data.dim()];
        for (o, t) in data.samples() {
            linalg::axpy(w * t, o, &mut cross);
        }
        let lipschitz = 2.0 * linalg::max_eigenvalue_psd(&moment);
        Self { data, moment, cross, lipschitz }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl LocalObjective for Ridge {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let total: f64 = self.data.samples().map(|(o, t)| (dot(x, o) - t) * (dot(x, o) - t)).sum();
        total / self.data.len() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mx = self.moment.mul_vec(x);
        mx.iter().zip(&self.cross).map(|(a, c)| 2.0 * (a - c)).collect()
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }

    /// Solves `((2/b) Σ o oᵀ + rho I) x = (2/b) Σ t o + rho z + y`.
    fn prox(&self, z: &[f64], y: &[f64], rho: f64) -> Result<Vec<f64>, ObjectiveError> {
        let mut lhs = self.moment.scaled(2.0);
        lhs.add_diagonal(rho);
        let rhs: Vec<f64> = self.cross.iter().zip(z).zip(y).map(|((c, zi), yi)| 2.0 * c + rho * zi + yi).collect();
        Ok(solve_dense(&lhs, &rhs)?)
    }

    fn quadratic_model(&self) -> Option<(DenseMatrix, Vec<f64>)> {
        Some((self.moment.scaled(2.0), linalg::scale(2.0, &self.cross)))
    }
}

/// `log(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + libm::log1p(libm::exp(-u))
    } else {
        libm::log1p(libm::exp(u))
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (1.0 + e)
    }
}

/// Logistic loss: `f(x) = (1/b) Σ_j log(1 + exp(-t_j xᵀ o_j))`, `t_j = ±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    data: Dataset,
    lipschitz: f64,
}

impl Logistic {
    pub fn new(data: Dataset) -> Result<Self, ObjectiveError> {
        if let Some(&t) = data.targets().iter().find(|&&t| t != 1.0 && t != -1.0) {
            return Err(ObjectiveError::InvalidLabel(t));
        }
        let lipschitz = 0.25 * linalg::max_eigenvalue_psd(&data.second_moment());
        Ok(Self { data, lipschitz })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl LocalObjective for Logistic {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let total: f64 = self.data.samples().map(|(o, t)| softplus(-t * dot(x, o))).sum();
        total / self.data.len() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let w = 1.0 / self.data.len() as f64;
        for (o, t) in self.data.samples() {
            linalg::axpy(-t * w * sigmoid(-t * dot(x, o)), o, &mut g);
        }
        g
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz
    }

    fn prox(&self, _z: &[f64], _y: &[f64], _rho: f64) -> Result<Vec<f64>, ObjectiveError> {
        Err(ObjectiveError::ProxUnsupported)
    }
}

/// Either of the two built-in losses, for heterogeneous call sites.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyObjective {
    Ridge(Ridge),
    Logistic(Logistic),
}

impl AnyObjective {
    pub fn data(&self) -> &Dataset {
        match self {
            Self::Ridge(f) => f.data(),
            Self::Logistic(f) => f.data(),
        }
    }
}

macro_rules! forward {
    ($self:ident, $f:ident => $e:expr) => {
        match $self {
            AnyObjective::Ridge($f) => $e,
            AnyObjective::Logistic($f) => $e,
        }
    };
}

impl LocalObjective for AnyObjective {
    fn dim(&self) -> usize {
        forward!(self, f => f.dim())
    }
    fn value(&self, x: &[f64]) -> f64 {
        forward!(self, f => f.value(x))
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        forward!(self, f => f.gradient(x))
    }
    fn lipschitz_bound(&self) -> f64 {
        forward!(self, f => f.lipschitz_bound())
    }
    fn prox(&self, z: &[f64], y: &[f64], rho: f64) -> Result<Vec<f64>, ObjectiveError> {
        forward!(self, f => f.prox(z, y, rho))
    }
    fn quadratic_model(&self) -> Option<(DenseMatrix, Vec<f64>)> {
        forward!(self, f => f.quadratic_model())
    }
}

/// `b` samples with every feature and target i.i.d. `U(0, 1)`.
pub fn generate_ridge_data<R: Rng + ?Sized>(b: usize, p: usize, rng: &mut R) -> Dataset {
    let inputs: Vec<Vec<f64>> = (0..b).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
    let targets = (0..b).map(|_| rng.random::<f64>()).collect();
    Dataset::new(inputs, targets).expect("shapes are consistent by construction")
}

/// Planted classifier `x ~ N(0, I)`.
pub fn planted_vector(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..p).map(|_| rng.sample(StandardNormal)).collect()
}

/// Features `o ~ N(0, I)`; label `+1` when `v ≤ sigmoid(plantedᵀ o)` for
/// `v ~ U(0, 1)`, else `-1`.
pub fn generate_logistic_data<R: Rng + ?Sized>(b: usize, planted: &[f64], rng: &mut R) -> Dataset {
    let p = planted.len();
    let mut inputs = Vec::with_capacity(b);
    let mut targets = Vec::with_capacity(b);
    for _ in 0..b {
        let o: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let v: f64 = rng.random();
        targets.push(if v <= sigmoid(dot(planted, &o)) { 1.0 } else { -1.0 });
        inputs.push(o);
    }
    Dataset::new(inputs, targets).expect("shapes are consistent by construction")
}

pub const DEFAULT_OPTIMUM_TOL: f64 = 1e-12;

/// Minimiser of `Σ_i f_i(x)`.
///
/// Quadratics are solved through the pooled normal equations (falling back
/// to the minimum-norm least-squares solution when singular). Anything else
/// runs gradient descent with backtracking until `||Σ ∇f_i|| ≤ tol`.
pub fn centralized_optimum<O: LocalObjective>(objectives: &[O], tol: f64) -> Result<Vec<f64>, ObjectiveError> {
    let first = objectives.first().ok_or(ObjectiveError::NoObjectives)?;
    let p = first.dim();

    let models: Option<Vec<_>> = objectives.iter().map(|o| o.quadratic_model()).collect();
    if let Some(models) = models {
        let mut h = DenseMatrix::zeros(p);
        let mut g = vec![0.0; p];
        for (hi, gi) in &models {
            h.add_scaled(1.0, hi);
            linalg::axpy(1.0, gi, &mut g);
        }
        return match solve_dense(&h, &g) {
            Ok(x) => Ok(x),
            Err(LinalgError::Singular) => {
                let mut system = SparseSystem::new(p, p);
                for i in 0..p {
                    for j in 0..p {
                        if h[(i, j)] != 0.0 {
                            system.push(i, j, h[(i, j)]);
                        }
                    }
                    system.set_rhs(i, g[i]);
                }
                Ok(lsqr(&system, 1e-14, 100 * p)?.solution)
            }
            Err(e) => Err(e.into()),
        };
    }

    let total = |x: &[f64]| objectives.iter().map(|o| o.value(x)).sum::<f64>();
    let total_grad = |x: &[f64]| {
        let mut g = vec![0.0; p];
        for o in objectives {
            linalg::axpy(1.0, &o.gradient(x), &mut g);
        }
        g
    };
    let lipschitz_sum: f64 = objectives.iter().map(|o| o.lipschitz_bound()).sum();
    let safe_step = if lipschitz_sum > 0.0 { 1.0 / lipschitz_sum } else { 1.0 };

    let mut x = vec![0.0; p];
    let mut g = total_grad(&x);
    let mut value = total(&x);
    let mut step = safe_step;
    for _ in 0..200_000 {
        let gnorm = norm(&g);
        if gnorm <= tol {
            return Ok(x);
        }
        // Armijo backtracking; the 1/L step always descends, so accept it
        // once backtracking reaches it even if rounding hides the decrease.
        let mut trial = step.max(safe_step);
        let (next, next_value) = loop {
            let candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - trial * gi).collect();
            let cv = total(&candidate);
            if cv <= value - 0.5 * trial * gnorm * gnorm || trial <= safe_step {
                break (candidate, cv);
            }
            trial = (trial * 0.5).max(safe_step);
        };
        let next_g = total_grad(&next);
        // Barzilai–Borwein guess for the next trial step.
        let s = linalg::sub(&next, &x);
        let dg = linalg::sub(&next_g, &g);
        let sy = dot(&s, &dg);
        step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(safe_step, 1e6 * safe_step) } else { safe_step };
        x = next;
        g = next_g;
        value = next_value;
    }
    Err(ObjectiveError::NotConverged { grad_norm: norm(&g) })
}
