use super::*;
use crate::objectives::{generate_ridge_data, Dataset, Ridge, DEFAULT_OPTIMUM_TOL};
use crate::topology::generate_graph;
use proptest::prelude::*;

fn ridge_problem(n: usize, seed: u64) -> Problem<Ridge> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objectives = (0..n).map(|_| Ridge::new(generate_ridge_data(30, 2, &mut rng))).collect();
    Problem::solve(objectives, DEFAULT_OPTIMUM_TOL).unwrap()
}

fn config(variant: Variant, rho: f64, seed: u64, iters: usize) -> SolverConfig {
    SolverConfig { rho, variant, seed, max_iters: iters, stop_eps: 0.0, ..SolverConfig::default() }
}

#[test]
fn zero_start_is_a_fixed_point_of_half_squared_norm() {
    // f = (1/2)(x1² + x2²)
    let f = Ridge::new(Dataset::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap());
    let problem = Problem::new(vec![f; 4], vec![0.0, 0.0]);
    let graph = generate_graph(4, 1.0, 0).unwrap();
    let out = run(&problem, &graph, &config(Variant::Iadmm, 1.0, 0, 40), &RunOptions::default()).unwrap();
    assert!(out.states.iter().all(|s| s == &AgentState::zeros(2)));
    assert_eq!(out.token.z, vec![0.0, 0.0]);
}

#[test]
fn converges_to_pooled_optimum() {
    let problem = ridge_problem(20, 1);
    let graph = generate_graph(20, 0.3, 1).unwrap();
    let cfg = SolverConfig { stop_eps: 1e-10, ..config(Variant::Iadmm, 10.0, 0, 500 * 20) };
    let out = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    let s = &out.trace.summary;
    assert!(s.final_accuracy < 1e-8, "{s:?}");
    assert!(s.kkt.max() < 1e-6);
    assert!(s.last_cycle_steps.iter().all(|&v| v < 1e-7));
}

#[test]
fn reductions_are_bit_identical() {
    let problem = ridge_problem(6, 2);
    let graph = generate_graph(6, 0.5, 2).unwrap();
    let base = run(&problem, &graph, &config(Variant::IadmmRandInit, 5.0, 9, 300), &RunOptions::default()).unwrap();
    let pi1 = SolverConfig { gamma: GammaDist::Constant(1.0), ..config(Variant::PiAdmm1, 5.0, 9, 300) };
    let pi1 = run(&problem, &graph, &pi1, &RunOptions::default()).unwrap();
    let pi2 = SolverConfig { sigma: 0.0, ..config(Variant::PiAdmm2, 5.0, 9, 300) };
    let pi2 = run(&problem, &graph, &pi2, &RunOptions::default()).unwrap();
    assert_eq!(base.truth.activations.iter().map(|a| &a.state).collect::<Vec<_>>(),
        pi1.truth.activations.iter().map(|a| &a.state).collect::<Vec<_>>());
    assert_eq!(base.transcript, pi1.transcript);
    assert_eq!(base.transcript, pi2.transcript);
    assert_eq!(base.states, pi2.states);
}

#[test]
fn runs_are_reproducible() {
    let problem = ridge_problem(5, 3);
    let graph = generate_graph(5, 0.6, 3).unwrap();
    let cfg = SolverConfig { sigma: 1e-3, ..config(Variant::PiAdmm2, 4.0, 11, 200) };
    let a = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    let b = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.transcript, b.transcript);
}

#[test]
fn dual_matches_gradient_after_prox() {
    let problem = ridge_problem(8, 4);
    let graph = generate_graph(8, 0.5, 4).unwrap();
    let cfg = SolverConfig { gamma: GammaDist::Uniform { lo: 0.9, hi: 1.1 }, ..config(Variant::PiAdmm1, 10.0, 4, 400) };
    let out = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    assert!(out.trace.summary.max_dual_gradient_gap.unwrap() <= 1e-9);
    assert!(out.trace.summary.max_step_identity_gap <= 1e-10);
}

#[test]
fn first_order_dual_matches_old_gradient() {
    let problem = ridge_problem(5, 5);
    let graph = generate_graph(5, 1.0, 5).unwrap();
    let cfg = SolverConfig { x_update: XUpdateMode::FirstOrder, ..config(Variant::IadmmRandInit, 20.0, 5, 300) };
    let out = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    assert!(out.trace.summary.max_dual_gradient_gap.unwrap() <= 1e-9);
}

#[test]
fn inactive_agents_stay_frozen() {
    let problem = ridge_problem(5, 6);
    let graph = generate_graph(5, 0.6, 6).unwrap();
    let cfg = SolverConfig { sigma: 0.1, ..config(Variant::PiAdmm2, 3.0, 6, 1) };
    let mut solver = Solver::new(&problem, &graph, &cfg).unwrap();
    for _ in 0..23 {
        let before = solver.states.clone();
        let out = solver.step().unwrap();
        for (i, (b, a)) in before.iter().zip(&solver.states).enumerate() {
            if i != out.agent {
                assert_eq!(b, a);
            }
        }
    }
}

#[test]
fn walk_follows_graph_edges() {
    let problem = ridge_problem(8, 7);
    let graph = generate_graph(8, 0.4, 7).unwrap();
    let out = run(&problem, &graph, &config(Variant::WadmmBaseline, 10.0, 7, 200), &RunOptions::default()).unwrap();
    assert_eq!(out.transcript.validate(), Ok(()));
    for o in &out.transcript.observations {
        assert!(graph.has_edge(o.sender, o.receiver));
    }
}

#[test]
fn records_once_per_cycle() {
    let problem = ridge_problem(4, 8);
    let graph = generate_graph(4, 1.0, 8).unwrap();
    let out = run(&problem, &graph, &config(Variant::Iadmm, 10.0, 0, 10), &RunOptions::default()).unwrap();
    let ks: Vec<usize> = out.trace.records.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![0, 4, 8, 9]);
    assert!(out.trace.records.iter().all(|r| r.comm_units == r.k + 1));
}

#[test]
fn stops_on_primal_rule_only_after_warmup() {
    let problem = ridge_problem(4, 9);
    let graph = generate_graph(4, 1.0, 9).unwrap();
    let cfg = SolverConfig { stop_eps: 1e-6, ..config(Variant::Iadmm, 10.0, 0, 100_000) };
    let out = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(out.trace.summary.termination, Termination::Converged);
    assert!(out.trace.summary.kkt.consensus < 1e-6);
    assert!(out.trace.summary.iterations >= 4);
}

#[test]
fn divergence_is_reported() {
    let problem = ridge_problem(4, 10);
    let graph = generate_graph(4, 1.0, 10).unwrap();
    let cfg = SolverConfig { x_update: XUpdateMode::FirstOrder, ..config(Variant::Iadmm, 1e-3, 10, 100_000) };
    let out = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
    assert!(matches!(out.trace.summary.termination, Termination::Diverged { .. }));
}

#[test]
fn rejects_bad_configs() {
    let problem = ridge_problem(4, 11);
    let graph = generate_graph(4, 1.0, 11).unwrap();
    let bad = [
        SolverConfig { rho: 0.0, ..SolverConfig::default() },
        SolverConfig { sigma: -1.0, ..SolverConfig::default() },
        SolverConfig { max_iters: 0, ..SolverConfig::default() },
        SolverConfig { gamma: GammaDist::Uniform { lo: 0.0, hi: 1.0 }, ..SolverConfig::default() },
        SolverConfig { init: InitDist { lo: 2.0, hi: 1.0 }, ..SolverConfig::default() },
    ];
    for cfg in bad {
        assert!(run(&problem, &graph, &cfg, &RunOptions::default()).is_err(), "{cfg:?}");
    }
    let small = generate_graph(3, 1.0, 0).unwrap();
    assert!(matches!(
        run(&problem, &small, &SolverConfig::default(), &RunOptions::default()),
        Err(SolverError::AgentCount { .. })
    ));
    let floor = SolverConfig {
        rho: 1e-3,
        gamma: GammaDist::StepFloor { margin: 1.01 },
        ..config(Variant::PiAdmm1, 1e-3, 0, 10)
    };
    assert!(matches!(run(&problem, &graph, &floor, &RunOptions::default()), Err(SolverError::GammaBoundUndefined { .. })));
}

#[test]
fn step_floor_resolves_to_constant() {
    let problem = ridge_problem(4, 12);
    let graph = generate_graph(4, 1.0, 12).unwrap();
    let l = problem.lipschitz();
    let cfg = SolverConfig { gamma: GammaDist::StepFloor { margin: 1.01 }, ..config(Variant::PiAdmm1, l + 1.0, 0, 8) };
    let solver = Solver::new(&problem, &graph, &cfg).unwrap();
    let expected = 1.01 * gamma_lower_bound(l + 1.0, l, 4).unwrap();
    assert_eq!(solver.gamma(), GammaDist::Constant(expected));
    assert!(solver.regime().perturbed_descent);
}

#[test]
fn logistic_needs_first_order() {
    use crate::objectives::{generate_logistic_data, Logistic};
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let objectives: Vec<Logistic> =
        (0..4).map(|_| Logistic::new(generate_logistic_data(30, &[1.0, -1.0], &mut rng)).unwrap()).collect();
    let problem = Problem::solve(objectives, DEFAULT_OPTIMUM_TOL).unwrap();
    let graph = generate_graph(4, 1.0, 13).unwrap();
    let exact = config(Variant::Iadmm, 1.0, 0, 10);
    assert_eq!(run(&problem, &graph, &exact, &RunOptions::default()).err(), Some(SolverError::ProxUnsupported));
    let first = SolverConfig { x_update: XUpdateMode::FirstOrder, ..config(Variant::Iadmm, 1.0, 0, 4 * 3000) };
    let out = run(&problem, &graph, &first, &RunOptions::default()).unwrap();
    assert!(out.trace.summary.final_accuracy < 1e-6, "{:?}", out.trace.summary);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn token_stays_the_running_average(seed in any::<u64>(), which in 0usize..5) {
        let variant = Variant::ALL[which];
        let problem = ridge_problem(6, seed);
        let graph = generate_graph(6, 0.5, seed).unwrap();
        let cfg = SolverConfig {
            gamma: GammaDist::Uniform { lo: 0.9, hi: 1.1 },
            sigma: 1e-3,
            ..config(variant, 10.0, seed, 100 * 6)
        };
        let out = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap();
        prop_assert!(out.trace.summary.max_token_gap <= 1e-10, "{}", out.trace.summary.max_token_gap);
    }
}

#[test]
fn corrupted_token_update_breaks_conservation() {
    let problem = ridge_problem(6, 14);
    let graph = generate_graph(6, 0.5, 14).unwrap();
    let cfg = SolverConfig { gamma: GammaDist::Uniform { lo: 0.9, hi: 1.1 }, ..config(Variant::PiAdmm1, 10.0, 14, 60) };
    let opts = RunOptions { corrupt_token_update: true, ..RunOptions::default() };
    let out = run(&problem, &graph, &cfg, &opts).unwrap();
    assert!(out.trace.summary.max_token_gap > 1e-6);
}

fn descent_setups(seed: u64) -> (Problem<Ridge>, Graph, SolverConfig, SolverConfig) {
    let problem = ridge_problem(8, seed);
    let graph = generate_graph(8, 0.5, seed).unwrap();
    let l = problem.lipschitz();
    let exact_descent = config(Variant::Iadmm, 2.0 * l + 2.0, seed, 100 * 8);
    let perturbed_descent = SolverConfig {
        gamma: GammaDist::StepFloor { margin: 1.01 },
        init: InitDist { lo: 0.0, hi: 1.0 },
        ..config(Variant::PiAdmm1, l + 1.0, seed, 100 * 8)
    };
    (problem, graph, exact_descent, perturbed_descent)
}

#[test]
fn first_activations_can_raise_the_lagrangian() {
    // The descent argument needs y_i = ∇f_i(x_i) before agent i updates,
    // which the initial states do not satisfy.
    let (problem, graph, exact_descent, perturbed_descent) = descent_setups(0);
    for cfg in [exact_descent, perturbed_descent] {
        let s = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap().trace.summary;
        assert!(s.max_lagrangian_increase > 1e-6, "{s:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lagrangian_descends_once_every_agent_has_updated(seed in any::<u64>()) {
        let (problem, graph, exact_descent, perturbed_descent) = descent_setups(seed);
        for cfg in [exact_descent, perturbed_descent] {
            let s = run(&problem, &graph, &cfg, &RunOptions::default()).unwrap().trace.summary;
            prop_assert!(s.regime.exact_descent || s.regime.perturbed_descent);
            prop_assert!(s.max_lagrangian_increase_warm <= 1e-12, "{s:?}");
            prop_assert!(s.min_lagrangian_warm >= problem.optimal_value - 1e-9);
        }
    }
}
