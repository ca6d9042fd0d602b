//! Measurements shared by `verify` and the acceptance suite. Each returns
//! numbers; callers decide what passes.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iadmm_core::adversary::scoring::{gradient_error, score, system_residual, terminal_bound_check, TerminalBoundCheck};
use iadmm_core::adversary::{
    build_ls_system, count_colluding, count_equations_unknowns, exact_recursion_attack, lsq_attack,
    terminal_backward_attack, LsOptions,
};
use iadmm_core::linalg::{dist, norm};
use iadmm_core::objectives::{
    generate_logistic_data, generate_ridge_data, planted_vector, LocalObjective, Logistic, Ridge,
};
use iadmm_core::solver::{run, GammaDist, RunOptions, RunOutput, RunSummary, Variant};
use iadmm_core::sparse::{lsqr, SparseSystem, DEFAULT_LSQR_TOL};

use crate::config::ExperimentConfig;
use crate::experiment::{build, Experiment, HarnessError};

/// Ridge instance with `b = 30`, `p = 2` and every seed equal to `seed`.
pub fn ridge_config(agents: usize, eta: f64, rho: f64, variant: Variant, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig { agents, eta, ..ExperimentConfig::default() };
    c.solver.rho = rho;
    c.solver.variant = variant;
    c.solver.stop_eps = 0.0;
    c.override_seed(seed);
    c
}

pub fn execute(config: &ExperimentConfig, options: RunOptions) -> Result<(Experiment, RunOutput), HarnessError> {
    let experiment = build(config)?;
    let out = run(&experiment.problem, &experiment.graph, &config.solver, &options)?;
    Ok((experiment, out))
}

fn quiet() -> RunOptions {
    RunOptions { record_every: Some(usize::MAX), keep_transcript: false, keep_truth: false, corrupt_token_update: false }
}

#[derive(Debug, Clone)]
pub struct Convergence {
    pub summary: RunSummary,
    pub elapsed: Duration,
}

/// I-ADMM on ridge with the default stopping rule and a cycle cap.
pub fn convergence(agents: usize, eta: f64, seed: u64, max_cycles: usize) -> Result<Convergence, HarnessError> {
    let mut c = ridge_config(agents, eta, 10.0, Variant::Iadmm, seed);
    c.solver.stop_eps = 1e-10;
    c.solver.max_iters = max_cycles * agents;
    let start = Instant::now();
    let (_, out) = execute(&c, quiet())?;
    Ok(Convergence { summary: out.trace.summary, elapsed: start.elapsed() })
}

/// Lagrangian behaviour of one run, split at the end of the first cycle.
#[derive(Debug, Clone, Copy)]
pub struct Descent {
    pub max_increase: f64,
    pub max_increase_warm: f64,
    /// `min_k L^k - F*`
    pub min_gap: f64,
    pub min_gap_warm: f64,
    pub kkt: f64,
    pub guaranteed: bool,
    pub iterations: usize,
}

fn descent_of(experiment: &Experiment, summary: &RunSummary, guaranteed: bool) -> Descent {
    let optimal = experiment.problem.optimal_value;
    Descent {
        max_increase: summary.max_lagrangian_increase,
        max_increase_warm: summary.max_lagrangian_increase_warm,
        min_gap: summary.min_lagrangian - optimal,
        min_gap_warm: summary.min_lagrangian_warm - optimal,
        kkt: summary.kkt.max(),
        guaranteed,
        iterations: summary.iterations,
    }
}

/// I-ADMM with `ρ = 2L + 2`.
pub fn exact_descent(agents: usize, seed: u64, cycles: usize) -> Result<Descent, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, Variant::Iadmm, seed);
    c.solver.rho = 2.0 * build(&c)?.problem.lipschitz() + 2.0;
    c.solver.max_iters = cycles * agents;
    let (e, out) = execute(&c, quiet())?;
    let s = &out.trace.summary;
    Ok(descent_of(&e, s, s.regime.exact_descent))
}

/// PI-ADMM1 with `ρ = L + 1` and `γ = margin ×` the step-size floor.
pub fn perturbed_descent(agents: usize, seed: u64, cycles: usize, margin: f64) -> Result<Descent, HarnessError> {
    let mut c = ridge_config(agents, 1.0, 10.0, Variant::PiAdmm1, seed);
    c.solver.rho = build(&c)?.problem.lipschitz() + 1.0;
    c.solver.gamma = GammaDist::StepFloor { margin };
    c.solver.max_iters = cycles * agents;
    c.solver.stop_eps = 1e-12;
    let (e, out) = execute(&c, quiet())?;
    let s = &out.trace.summary;
    Ok(descent_of(&e, s, s.regime.perturbed_descent))
}

/// `max_k ||z^k - (1/N) Σ (x_i^k - y_i^k/ρ)||`.
pub fn token_conservation(variant: Variant, agents: usize, seed: u64, cycles: usize, corrupt: bool) -> Result<f64, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, variant, seed);
    c.solver.max_iters = cycles * agents;
    c.solver.gamma = GammaDist::Uniform { lo: 0.9, hi: 1.1 };
    c.solver.sigma = 1e-3;
    let (_, out) = execute(&c, RunOptions { corrupt_token_update: corrupt, ..quiet() })?;
    Ok(out.trace.summary.max_token_gap)
}

/// Largest error of the exact attack on states, duals and gradients.
pub fn exact_attack(agents: usize, seed: u64, cycles: usize) -> Result<f64, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, Variant::Iadmm, seed);
    c.solver.max_iters = cycles * agents;
    let (e, out) = execute(&c, RunOptions::default())?;
    let report = exact_recursion_attack(&out.transcript)?;
    let s = score(&report, &out.truth);
    Ok(s.max_x.max(s.max_y).max(gradient_error(&report, &out.truth, &e.problem.objectives)))
}

/// Terminal attack against an I-ADMM run stopped at `eps`.
pub fn terminal_bounds(agents: usize, seed: u64, eps: f64) -> Result<TerminalBoundCheck, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, Variant::Iadmm, seed);
    c.solver.stop_eps = eps;
    c.solver.max_iters = 100_000 * agents;
    let (_, out) = execute(&c, RunOptions::default())?;
    let report = terminal_backward_attack(&out.transcript)?;
    Ok(terminal_bound_check(&report, &out.transcript, &out.truth, eps)?)
}

/// Residual of the true states through the bare system whose assumptions
/// match the run.
pub fn system_truth_residual(variant: Variant, agents: usize, seed: u64, cycles: usize) -> Result<f64, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, variant, seed);
    c.solver.max_iters = cycles * agents;
    c.solver.sigma = 1e-3;
    let (_, out) = execute(&c, RunOptions::default())?;
    let bare = LsOptions { kkt_row: false, pin_last_cycle: false };
    let system = build_ls_system(&out.transcript, variant, out.transcript.horizon() - 1, bare)?;
    Ok(system_residual(&system, &out.truth))
}

/// Mismatches between the counts and their closed forms over the grid,
/// as readable strings.
pub fn count_mismatches(ks: &[usize], ns: &[usize]) -> Vec<String> {
    let mut bad = Vec::new();
    let bare = LsOptions { kkt_row: false, pin_last_cycle: false };
    for &k in ks {
        for &n in ns {
            let c = count_equations_unknowns(Variant::PiAdmm1, k, n, bare);
            if c.published != (2 * k + n + 2, 3 * k + 2 * n + 3) {
                bad.push(format!("perturbed-step count K={k} N={n}: {:?}", c.published));
            }
            if c.published.1 <= c.published.0 {
                bad.push(format!("perturbed-step system not under-determined at K={k} N={n}"));
            }
            let r = count_equations_unknowns(Variant::IadmmRandInit, k, n, bare);
            if r.implemented.1 - r.implemented.0 != n {
                bad.push(format!("random-init deficit K={k} N={n}: {:?}", r.implemented));
            }
            if count_colluding(k, n) != (2 * (k / n) + 3, 3 * (k / n) + 5) {
                bad.push(format!("colluding count K={k} N={n}: {:?}", count_colluding(k, n)));
            }
        }
    }
    bad
}

/// Built system shapes that differ from the implemented counts, for every
/// option set the transcript supports.
pub fn built_count_mismatches(ks: &[usize], ns: &[usize]) -> Result<Vec<String>, HarnessError> {
    let mut bad = Vec::new();
    let longest = ks.iter().max().copied().unwrap_or(0);
    for &n in ns {
        let mut c = ridge_config(n, 1.0, 10.0, Variant::PiAdmm1, 0);
        c.solver.max_iters = longest + 1;
        let (_, out) = execute(&c, RunOptions { record_every: Some(usize::MAX), keep_truth: false, ..RunOptions::default() })?;
        for &k in ks {
            for variant in [Variant::Iadmm, Variant::IadmmRandInit, Variant::PiAdmm1] {
                for options in [
                    LsOptions { kkt_row: false, pin_last_cycle: false },
                    LsOptions { kkt_row: true, pin_last_cycle: false },
                    LsOptions::default(),
                ] {
                    // the pin needs two activations per agent
                    if options.pin_last_cycle && k + 1 < 2 * n {
                        continue;
                    }
                    let system = build_ls_system(&out.transcript, variant, k, options)?;
                    let expected = count_equations_unknowns(variant, k, n, options).implemented;
                    if (system.rows(), system.cols()) != expected {
                        bad.push(format!("{} K={k} N={n} {options:?}: built {:?}, counted {expected:?}", variant.name(), (system.rows(), system.cols())));
                    }
                }
            }
        }
    }
    Ok(bad)
}

/// Errors of one agent's first coordinate at `k = 0` and `k = K`.
#[derive(Debug, Clone, Copy)]
pub struct Leakage {
    pub x_initial: f64,
    pub x_final: f64,
    pub y_initial: f64,
    pub y_final: f64,
    pub lsqr_converged: bool,
}

impl Leakage {
    pub fn x_ratio(&self) -> f64 {
        self.x_final / self.x_initial
    }

    pub fn y_ratio(&self) -> f64 {
        self.y_final / self.y_initial
    }
}

/// Least-squares attack on a randomized run of `iterations` updates with
/// `γ ~ U(0.9, 1.1)`, `x⁰ ~ U(0, 100)` and the given noise scale.
pub fn leakage(
    variant: Variant,
    agents: usize,
    seed: u64,
    iterations: usize,
    sigma: f64,
    lsqr_tol: f64,
    lsqr_iter: Option<usize>,
) -> Result<Leakage, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, variant, seed);
    c.solver.max_iters = iterations;
    c.solver.gamma = GammaDist::Uniform { lo: 0.9, hi: 1.1 };
    c.solver.sigma = sigma;
    let (_, out) = execute(&c, RunOptions { record_every: Some(usize::MAX), ..RunOptions::default() })?;
    let last = out.transcript.horizon() - 1;
    let report = lsq_attack(&out.transcript, variant, last, LsOptions::default(), lsqr_tol, lsqr_iter)?;
    let t = report.trajectory(0).expect("every agent is estimated");
    let err = |k: usize| {
        let truth = out.truth.state_at(0, k);
        ((t.x_at(k)[0] - truth.x[0]).abs(), (t.y_at(k)[0] - truth.y[0]).abs())
    };
    let (x_initial, y_initial) = err(0);
    let (x_final, y_final) = err(last + 1);
    Ok(Leakage { x_initial, x_final, y_initial, y_final, lsqr_converged: report.solve.is_some_and(|s| s.converged) })
}

/// Final-cycle primal errors of the pinned least-squares attack on a run
/// converged to `eps`.
pub fn final_cycle_leakage(variant: Variant, agents: usize, seed: u64, eps: f64) -> Result<f64, HarnessError> {
    let mut c = ridge_config(agents, 1.0, 10.0, variant, seed);
    c.solver.stop_eps = eps;
    c.solver.max_iters = 100_000 * agents;
    c.solver.gamma = GammaDist::Uniform { lo: 0.9, hi: 1.1 };
    c.solver.sigma = 1e-9;
    let (_, out) = execute(&c, RunOptions { record_every: Some(usize::MAX), ..RunOptions::default() })?;
    let last = out.transcript.horizon() - 1;
    let report = lsq_attack(&out.transcript, variant, last, LsOptions::default(), DEFAULT_LSQR_TOL, None)?;
    Ok(iadmm_core::adversary::scoring::final_epoch_errors(&report, &out.truth).0)
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseFloor {
    pub noisy_best: f64,
    pub clean_best: f64,
    /// Noise-free primal perturbation reproduces random init bit for bit.
    pub zero_noise_identical: bool,
}

pub fn noise_floor(agents: usize, eta: f64, seed: u64, cycles: usize, sigma: f64) -> Result<NoiseFloor, HarnessError> {
    let make = |variant, sigma| {
        let mut c = ridge_config(agents, eta, 10.0, variant, seed);
        c.solver.max_iters = cycles * agents;
        c.solver.sigma = sigma;
        c
    };
    let noisy = execute(&make(Variant::PiAdmm2, sigma), quiet())?.1;
    let clean = execute(&make(Variant::Iadmm, 0.0), quiet())?.1;
    let full = RunOptions { record_every: Some(1), ..RunOptions::default() };
    let zero = execute(&make(Variant::PiAdmm2, 0.0), full.clone())?.1;
    let rand = execute(&make(Variant::IadmmRandInit, 0.0), full)?.1;
    let identical = zero.states == rand.states
        && zero.transcript == rand.transcript
        && zero.trace.records.iter().zip(&rand.trace.records).all(|(a, b)| a.accuracy.to_bits() == b.accuracy.to_bits());
    Ok(NoiseFloor {
        noisy_best: noisy.trace.summary.best_accuracy,
        clean_best: clean.trace.summary.best_accuracy,
        zero_noise_identical: identical,
    })
}

/// Accuracy after `budget` communication units.
pub fn budget_accuracy(variant: Variant, agents: usize, seed: u64, budget: usize) -> Result<f64, HarnessError> {
    let mut c = ridge_config(agents, 0.3, 10.0, variant, seed);
    c.solver.max_iters = budget;
    let (_, out) = execute(&c, quiet())?;
    Ok(out.trace.summary.final_accuracy)
}

fn central_difference(f: &impl LocalObjective, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut up, mut down) = (x.to_vec(), x.to_vec());
            up[i] += h;
            down[i] -= h;
            (f.value(&up) - f.value(&down)) / (2.0 * h)
        })
        .collect()
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    dist(a, b) / norm(b).max(1e-12)
}

/// Worst relative finite-difference gradient errors `(ridge, logistic)`
/// over `trials` random objectives and points.
pub fn gradient_checks(seed: u64, trials: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ridge_worst, mut logistic_worst) = (0.0f64, 0.0f64);
    for t in 0..trials {
        let ridge = Ridge::new(generate_ridge_data(30, 2, &mut rng));
        let planted = planted_vector(2, seed.wrapping_add(t as u64));
        let logistic = Logistic::new(generate_logistic_data(30, &planted, &mut rng)).expect("labels are ±1");
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        // the ridge loss is quadratic, so a wide step is exact up to rounding
        ridge_worst = ridge_worst.max(relative(&central_difference(&ridge, &x, 0.5), &ridge.gradient(&x)));
        logistic_worst = logistic_worst.max(relative(&central_difference(&logistic, &x, 1e-5), &logistic.gradient(&x)));
    }
    (ridge_worst, logistic_worst)
}

/// Relative recovery error of LSQR on a consistent random tall system with
/// a planted solution.
pub fn lsqr_planted(seed: u64, rows: usize, cols: usize) -> Result<f64, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut system = SparseSystem::new(rows, cols);
    let planted: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut rhs = vec![0.0; rows];
    for r in 0..rows {
        // a diagonal band keeps the matrix full column rank
        let mut entries = vec![(r % cols, 2.0 + rng.random::<f64>())];
        for _ in 0..3 {
            entries.push((rng.random_range(0..cols), rng.random_range(-1.0..1.0)));
        }
        for &(c, v) in &entries {
            system.push(r, c, v);
            rhs[r] += v * planted[c];
        }
    }
    let system = system.with_rhs(rhs).map_err(iadmm_core::adversary::AttackError::from)?;
    let sol = lsqr(&system, 1e-14, 20 * (rows + cols)).map_err(iadmm_core::adversary::AttackError::from)?;
    Ok(dist(&sol.solution, &planted) / norm(&planted))
}
