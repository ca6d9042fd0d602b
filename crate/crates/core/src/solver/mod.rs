//! The token-passing solver and its privacy-preserving variants.

mod metrics;
mod truth;
mod update;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use metrics::{
    accuracy, aug_lagrangian, coupling, dual_sum_norm, kkt_residuals, primal_residual, token_gap, Accuracy,
    KktResiduals,
};
pub use truth::{Activation, GroundTruth};
pub use update::{
    gamma_lower_bound, initialize, sample_gamma, x_update, y_update, z_update_incremental, AgentState, Token,
};

use crate::linalg::{self, dist, norm};
use crate::objectives::{centralized_optimum, LocalObjective, ObjectiveError};
use crate::topology::{ActivationSchedule, Graph, Walker};
use crate::transcript::{Observation, Transcript};

/// ChaCha stream ids. Each random quantity has its own stream so switching a
/// perturbation off leaves every other draw untouched.
pub const INIT_STREAM: u64 = 1;
pub const GAMMA_STREAM: u64 = 2;
pub const NOISE_STREAM: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Zero initialisation, cyclic order.
    Iadmm,
    /// Random `x_i^0`, `y_i^0 = ρ x_i^0`.
    IadmmRandInit,
    /// Random init plus a fresh step-size multiplier per activation.
    PiAdmm1,
    /// Random init plus Gaussian noise on each new primal iterate.
    PiAdmm2,
    /// Same updates as `Iadmm`, random-walk activation order.
    WadmmBaseline,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Iadmm, Variant::IadmmRandInit, Variant::PiAdmm1, Variant::PiAdmm2, Variant::WadmmBaseline];

    pub fn random_init(self) -> bool {
        matches!(self, Variant::IadmmRandInit | Variant::PiAdmm1 | Variant::PiAdmm2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Iadmm => "iadmm",
            Variant::IadmmRandInit => "iadmm_randinit",
            Variant::PiAdmm1 => "piadmm1",
            Variant::PiAdmm2 => "piadmm2",
            Variant::WadmmBaseline => "wadmm_baseline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XUpdateMode {
    ExactProx,
    FirstOrder,
}

/// Distribution of the step-size multiplier `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaDist {
    Uniform { lo: f64, hi: f64 },
    Constant(f64),
    /// `margin` times the step-size floor for the run's `ρ`, `L` and `N`.
    StepFloor { margin: f64 },
}

impl GammaDist {
    /// `U(1 - spread/ρ, 1 + spread/ρ)`, the experimental choice.
    pub fn around_one(spread: f64, rho: f64) -> Self {
        GammaDist::Uniform { lo: 1.0 - spread / rho, hi: 1.0 + spread / rho }
    }

    /// Replaces `StepFloor` by the constant it denotes.
    pub fn resolve(self, rho: f64, lipschitz: f64, n: usize) -> Result<Self, SolverError> {
        match self {
            GammaDist::StepFloor { margin } => Ok(GammaDist::Constant(margin * gamma_lower_bound(rho, lipschitz, n)?)),
            other => Ok(other),
        }
    }

    /// Smallest value the distribution can produce.
    pub fn lower(self) -> Option<f64> {
        match self {
            GammaDist::Uniform { lo, .. } => Some(lo),
            GammaDist::Constant(c) => Some(c),
            GammaDist::StepFloor { .. } => None,
        }
    }

    fn validate(self) -> Result<(), SolverError> {
        let ok = match self {
            GammaDist::Uniform { lo, hi } => lo > 0.0 && hi >= lo && hi.is_finite(),
            GammaDist::Constant(c) => c > 0.0 && c.is_finite(),
            GammaDist::StepFloor { margin } => margin > 0.0 && margin.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidGamma(self))
        }
    }
}

/// Per-coordinate `U(lo, hi)` for the random initial states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitDist {
    pub lo: f64,
    pub hi: f64,
}

impl Default for InitDist {
    fn default() -> Self {
        Self { lo: 0.0, hi: 100.0 }
    }
}

impl InitDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub variant: Variant,
    pub x_update: XUpdateMode,
    /// Used by `PiAdmm1` only.
    pub gamma: GammaDist,
    /// Standard deviation of the primal noise; used by `PiAdmm2` only.
    pub sigma: f64,
    pub init: InitDist,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once `max_i ||z - x_i|| < stop_eps` (after every agent has
    /// updated at least once).
    pub stop_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 10.0,
            variant: Variant::Iadmm,
            x_update: XUpdateMode::ExactProx,
            gamma: GammaDist::Constant(1.0),
            sigma: 0.0,
            init: InitDist::default(),
            seed: 0,
            max_iters: 10_000,
            stop_eps: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(SolverError::InvalidRho(self.rho));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SolverError::InvalidSigma(self.sigma));
        }
        if !(self.init.lo.is_finite() && self.init.hi.is_finite() && self.init.lo <= self.init.hi) {
            return Err(SolverError::InvalidInit { lo: self.init.lo, hi: self.init.hi });
        }
        if self.max_iters == 0 {
            return Err(SolverError::ZeroIterations);
        }
        if !(self.stop_eps >= 0.0) {
            return Err(SolverError::InvalidStopEps(self.stop_eps));
        }
        self.gamma.validate()
    }

    pub fn schedule(&self) -> ActivationSchedule {
        match self.variant {
            Variant::WadmmBaseline => ActivationSchedule::RandomWalk { seed: self.seed },
            _ => ActivationSchedule::Cyclic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("penalty rho must be positive and finite, got {0}")]
    InvalidRho(f64),
    #[error("noise scale sigma must be non-negative and finite, got {0}")]
    InvalidSigma(f64),
    #[error("initialisation range [{lo}, {hi}] is invalid")]
    InvalidInit { lo: f64, hi: f64 },
    #[error("gamma distribution {0:?} must have strictly positive support")]
    InvalidGamma(GammaDist),
    #[error("the step-size floor needs rho > L (rho = {rho}, L = {lipschitz})")]
    GammaBoundUndefined { rho: f64, lipschitz: f64 },
    #[error("floor gamma must be resolved against rho, L and N before sampling")]
    UnresolvedGamma,
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error("stop_eps must be non-negative, got {0}")]
    InvalidStopEps(f64),
    #[error("graph has {graph} agents but the problem has {problem}")]
    AgentCount { graph: usize, problem: usize },
    #[error("objective has no closed-form prox; set the x-update mode to first_order")]
    ProxUnsupported,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Local objectives together with the pooled optimum used for scoring.
#[derive(Debug, Clone)]
pub struct Problem<O> {
    pub objectives: Vec<O>,
    pub optimum: Vec<f64>,
    /// `Σ_i f_i(x*)`
    pub optimal_value: f64,
}

impl<O: LocalObjective> Problem<O> {
    pub fn new(objectives: Vec<O>, optimum: Vec<f64>) -> Self {
        let optimal_value = objectives.iter().map(|f| f.value(&optimum)).sum();
        Self { objectives, optimum, optimal_value }
    }

    /// Computes the optimum with [`centralized_optimum`].
    pub fn solve(objectives: Vec<O>, tol: f64) -> Result<Self, ObjectiveError> {
        let optimum = centralized_optimum(&objectives, tol)?;
        Ok(Self::new(objectives, optimum))
    }

    pub fn n_agents(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    /// Uniform gradient Lipschitz constant: the largest local bound.
    pub fn lipschitz(&self) -> f64 {
        self.objectives.iter().map(|f| f.lipschitz_bound()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Keep an [`IterationRecord`] every this many iterations (and the last).
    /// `None` means once per cycle.
    pub record_every: Option<usize>,
    pub keep_transcript: bool,
    pub keep_truth: bool,
    /// Fault injection for the verification suite: use the perturbed
    /// penalty in the token update.
    pub corrupt_token_update: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record_every: None, keep_transcript: true, keep_truth: true, corrupt_token_update: false }
    }
}

/// Snapshot after iteration `k`, i.e. of the state `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub agent: usize,
    pub accuracy: f64,
    pub aug_lagrangian: f64,
    /// `max_i ||z - x_i||`
    pub primal_residual: f64,
    /// `||y_{i_k}^{k+1} - y_{i_k}^k||`
    pub dual_step: f64,
    /// `||Σ_i y_i||`
    pub grad_residual: f64,
    pub comm_units: usize,
    pub gamma: Option<f64>,
    pub omega_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Converged,
    MaxIters,
    /// A non-finite value appeared during iteration `k`.
    Diverged { k: usize },
}

/// Whether a parameter setting meets the sufficient conditions of the two
/// descent guarantees: exact updates with `ρ ≥ 2L + 2`, or perturbed steps
/// at or above the step-size floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeFlags {
    pub exact_descent: bool,
    pub perturbed_descent: bool,
    pub lipschitz: f64,
    pub gamma_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub termination: Termination,
    pub iterations: usize,
    pub comm_units: usize,
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub accuracy_excluded: usize,
    pub initial_lagrangian: f64,
    pub final_lagrangian: f64,
    pub min_lagrangian: f64,
    /// Minimum over states reached after every agent had updated once.
    pub min_lagrangian_warm: f64,
    /// Largest single-step increase of the augmented Lagrangian.
    pub max_lagrangian_increase: f64,
    /// Same, counting only steps taken after every agent had updated once.
    pub max_lagrangian_increase_warm: f64,
    /// Iterations until every agent had updated at least once.
    pub warmup_iterations: Option<usize>,
    pub kkt: KktResiduals,
    pub max_token_gap: f64,
    /// Largest `||y_new - ∇f(x)||` over activations, where `x` is the new
    /// iterate for the exact prox and the old one for the first-order step.
    /// `None` when noise breaks the identity.
    pub max_dual_gradient_gap: Option<f64>,
    /// Largest `||ρ(z^k - x^{k+1}) - (y^{k+1} - y^k)/γ||`.
    pub max_step_identity_gap: f64,
    /// Largest `||z^{k+1}-z^k||`, `||Δx||`, `||Δy||` over the last `N`
    /// iterations.
    pub last_cycle_steps: [f64; 3],
    pub regime: RegimeFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub transcript: Transcript,
    pub truth: GroundTruth,
    pub states: Vec<AgentState>,
    pub token: Token,
}

/// What one activation did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub k: usize,
    pub agent: usize,
    pub next_agent: usize,
    pub old: AgentState,
    pub gamma: Option<f64>,
    pub omega: Option<Vec<f64>>,
    pub z_old: Vec<f64>,
}

/// Live solver state; [`Solver::step`] performs one token hop.
pub struct Solver<'a, O> {
    problem: &'a Problem<O>,
    graph: &'a Graph,
    config: SolverConfig,
    gamma: GammaDist,
    walker: Walker,
    gamma_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    corrupt_token_update: bool,
    pub states: Vec<AgentState>,
    pub token: Token,
    pub active: usize,
}

impl<'a, O: LocalObjective> Solver<'a, O> {
    pub fn new(problem: &'a Problem<O>, graph: &'a Graph, config: &SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        if graph.n_agents() != problem.n_agents() {
            return Err(SolverError::AgentCount { graph: graph.n_agents(), problem: problem.n_agents() });
        }
        let gamma = if config.variant == Variant::PiAdmm1 {
            config.gamma.resolve(config.rho, problem.lipschitz(), problem.n_agents())?
        } else {
            GammaDist::Constant(1.0)
        };
        let mut init_rng = stream_rng(config.seed, INIT_STREAM);
        let (states, token) =
            initialize(config.variant, problem.n_agents(), problem.dim(), config.rho, config.init, &mut init_rng);
        Ok(Self {
            problem,
            graph,
            config: config.clone(),
            gamma,
            walker: Walker::new(config.schedule()),
            gamma_rng: stream_rng(config.seed, GAMMA_STREAM),
            noise_rng: stream_rng(config.seed, NOISE_STREAM),
            corrupt_token_update: false,
            states,
            token,
            active: 0,
        })
    }

    /// The resolved `γ` distribution.
    pub fn gamma(&self) -> GammaDist {
        self.gamma
    }

    pub fn step(&mut self) -> Result<StepOutcome, SolverError> {
        let rho = self.config.rho;
        let k = self.token.k;
        let agent = self.active;
        let objective = &self.problem.objectives[agent];

        let gamma = match self.config.variant {
            Variant::PiAdmm1 => Some(sample_gamma(self.gamma, &mut self.gamma_rng)?),
            _ => None,
        };
        let rho_t = rho * gamma.unwrap_or(1.0);

        let old = self.states[agent].clone();
        let mut x_new = x_update(objective, &old, &self.token.z, rho_t, self.config.x_update)?;
        let omega = if self.config.variant == Variant::PiAdmm2 && self.config.sigma > 0.0 {
            let sigma = self.config.sigma;
            let w: Vec<f64> = (0..x_new.len()).map(|_| sigma * self.noise_rng.sample::<f64, _>(StandardNormal)).collect();
            linalg::axpy(1.0, &w, &mut x_new);
            Some(w)
        } else {
            None
        };
        let y_new = y_update(&old.y, &self.token.z, &x_new, rho_t);
        let new = AgentState { x: x_new, y: y_new };

        let token_rho = if self.corrupt_token_update { rho_t } else { rho };
        let z_new = z_update_incremental(&self.token.z, &old, &new, token_rho, self.problem.n_agents());
        let z_old = core::mem::replace(&mut self.token.z, z_new);
        self.states[agent] = new;
        self.token.k += 1;

        let next_agent = self.walker.next_agent(self.graph, k, agent);
        self.active = next_agent;
        Ok(StepOutcome { k, agent, next_agent, old, gamma, omega, z_old })
    }

    fn regime(&self) -> RegimeFlags {
        let lipschitz = self.problem.lipschitz();
        let rho = self.config.rho;
        let cyclic = self.config.schedule() == ActivationSchedule::Cyclic;
        let exact = self.config.x_update == XUpdateMode::ExactProx;
        let unperturbed = match self.config.variant {
            Variant::Iadmm | Variant::IadmmRandInit => true,
            Variant::PiAdmm1 => self.gamma == GammaDist::Constant(1.0),
            Variant::PiAdmm2 => self.config.sigma == 0.0,
            Variant::WadmmBaseline => false,
        };
        let gamma_floor = gamma_lower_bound(rho, lipschitz, self.problem.n_agents()).ok();
        let perturbed_descent = self.config.variant == Variant::PiAdmm1
            && cyclic
            && exact
            && matches!((gamma_floor, self.gamma.lower()), (Some(floor), Some(lo)) if lo > floor);
        RegimeFlags { exact_descent: cyclic && exact && unperturbed && rho >= 2.0 * lipschitz + 2.0, perturbed_descent, lipschitz, gamma_floor }
    }
}

fn all_finite(s: &AgentState, z: &[f64]) -> bool {
    linalg::all_finite(&s.x) && linalg::all_finite(&s.y) && linalg::all_finite(z)
}

/// Runs until the primal stopping rule fires, `max_iters` is reached or a
/// non-finite value appears.
pub fn run<O: LocalObjective>(
    problem: &Problem<O>,
    graph: &Graph,
    config: &SolverConfig,
    options: &RunOptions,
) -> Result<RunOutput, SolverError> {
    let mut solver = Solver::new(problem, graph, config)?;
    solver.corrupt_token_update = options.corrupt_token_update;
    let n = problem.n_agents();
    let rho = config.rho;
    let record_every = options.record_every.unwrap_or(n).max(1);
    let regime = solver.regime();

    let initial_x: Vec<Vec<f64>> = solver.states.iter().map(|s| s.x.clone()).collect();
    let mut truth = GroundTruth::new(if options.keep_truth { solver.states.clone() } else { Vec::new() });
    let mut transcript = Transcript::new(n, rho, solver.token.z.clone());

    let mut values: Vec<f64> = problem.objectives.iter().zip(&solver.states).map(|(f, s)| f.value(&s.x)).collect();
    let lagrangian = |values: &[f64], states: &[AgentState], z: &[f64]| values.iter().sum::<f64>() + coupling(states, z, rho);
    let initial_lagrangian = lagrangian(&values, &solver.states, &solver.token.z);
    let initial_accuracy = accuracy(&solver.states, &problem.optimum, &initial_x);

    let mut prev_lagrangian = initial_lagrangian;
    let mut min_lagrangian = initial_lagrangian;
    let mut min_lagrangian_warm = f64::INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_increase_warm = f64::NEG_INFINITY;
    let mut best_accuracy = initial_accuracy.value;
    let mut final_accuracy = initial_accuracy;
    let mut max_token_gap = token_gap(&solver.states, &solver.token.z, rho);
    let mut max_dual_gap: Option<f64> = Some(0.0);
    let mut max_identity_gap: f64 = 0.0;
    let mut activated = vec![false; n];
    let mut remaining = n;
    let mut warmup = None;
    let mut recent: VecDeque<[f64; 3]> = VecDeque::with_capacity(n + 1);
    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;

    for _ in 0..config.max_iters {
        let was_warm = warmup.is_some();
        let out = solver.step()?;
        let k = out.k;
        let agent = out.agent;
        let new = &solver.states[agent];
        let z = &solver.token.z;

        if !all_finite(new, z) {
            termination = Termination::Diverged { k };
            break;
        }

        if !activated[agent] {
            activated[agent] = true;
            remaining -= 1;
            if remaining == 0 {
                warmup = Some(k + 1);
            }
        }

        let objective = &problem.objectives[agent];
        values[agent] = objective.value(&new.x);
        let current = lagrangian(&values, &solver.states, z);
        let increase = current - prev_lagrangian;
        max_increase = max_increase.max(increase);
        if was_warm {
            max_increase_warm = max_increase_warm.max(increase);
        }
        prev_lagrangian = current;
        min_lagrangian = min_lagrangian.min(current);
        if warmup.is_some() {
            min_lagrangian_warm = min_lagrangian_warm.min(current);
        }

        let acc = accuracy(&solver.states, &problem.optimum, &initial_x);
        best_accuracy = best_accuracy.min(acc.value);
        final_accuracy = acc;
        max_token_gap = max_token_gap.max(token_gap(&solver.states, z, rho));

        if out.omega.is_some() {
            max_dual_gap = None;
        } else if let Some(gap) = max_dual_gap.as_mut() {
            let at = match config.x_update {
                XUpdateMode::ExactProx => &new.x,
                XUpdateMode::FirstOrder => &out.old.x,
            };
            *gap = gap.max(dist(&new.y, &objective.gradient(at)));
        }
        let gamma = out.gamma.unwrap_or(1.0);
        let identity_gap = (0..z.len())
            .map(|c| {
                let d = rho * (out.z_old[c] - new.x[c]) - (new.y[c] - out.old.y[c]) / gamma;
                d * d
            })
            .sum::<f64>();
        max_identity_gap = max_identity_gap.max(libm::sqrt(identity_gap));

        let dual_step = dist(&new.y, &out.old.y);
        if recent.len() == n {
            recent.pop_front();
        }
        recent.push_back([dist(z, &out.z_old), dist(&new.x, &out.old.x), dual_step]);

        let primal = primal_residual(&solver.states, z);
        let converged = warmup.is_some() && primal < config.stop_eps;
        let last = converged || k + 1 == config.max_iters;
        if k % record_every == 0 || last {
            records.push(IterationRecord {
                k,
                agent,
                accuracy: acc.value,
                aug_lagrangian: current,
                primal_residual: primal,
                dual_step,
                grad_residual: dual_sum_norm(&solver.states),
                comm_units: k + 1,
                gamma: out.gamma,
                omega_norm: out.omega.as_deref().map(norm),
            });
        }

        if options.keep_transcript {
            transcript.observations.push(Observation { k, sender: agent, receiver: out.next_agent, token: z.clone() });
        }
        if options.keep_truth {
            truth.push(Activation { k, agent, state: new.clone(), gamma: out.gamma, omega: out.omega });
        }
        if converged {
            termination = Termination::Converged;
            break;
        }
    }

    let iterations = solver.token.k;
    let mut last_cycle_steps = [0.0f64; 3];
    for s in &recent {
        for (m, v) in last_cycle_steps.iter_mut().zip(s) {
            *m = (*m).max(*v);
        }
    }
    let summary = RunSummary {
        termination,
        iterations,
        comm_units: iterations,
        final_accuracy: final_accuracy.value,
        best_accuracy,
        accuracy_excluded: final_accuracy.excluded,
        initial_lagrangian,
        final_lagrangian: prev_lagrangian,
        min_lagrangian,
        min_lagrangian_warm,
        max_lagrangian_increase: max_increase,
        max_lagrangian_increase_warm: max_increase_warm,
        warmup_iterations: warmup,
        kkt: kkt_residuals(&problem.objectives, &solver.states, &solver.token.z),
        max_token_gap,
        max_dual_gradient_gap: max_dual_gap,
        max_step_identity_gap: max_identity_gap,
        last_cycle_steps,
        regime,
    };
    Ok(RunOutput {
        trace: RunTrace { records, summary },
        transcript,
        truth,
        states: solver.states,
        token: solver.token,
    })
}

#[cfg(test)]
mod tests;
