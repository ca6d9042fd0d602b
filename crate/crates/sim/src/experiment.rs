//! Turning a config into graph, data, runs and attacks.

use iadmm_core::adversary::{
    colluding_attack, exact_recursion_attack, lsq_attack, terminal_backward_attack, AttackError, AttackReport,
};
use iadmm_core::objectives::{
    generate_logistic_data, generate_ridge_data, planted_vector, AnyObjective, Logistic, ObjectiveError, Ridge,
    DEFAULT_OPTIMUM_TOL,
};
use iadmm_core::solver::{run, GroundTruth, Problem, RunOptions, RunOutput, SolverError};
use iadmm_core::topology::{generate_graph, Graph, TopologyError};
use iadmm_core::transcript::Transcript;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{AttackMethod, ConfigError, ExperimentConfig, ProblemKind};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("transcript does not match the config: {0}")]
    Mismatch(String),
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("colluding attack needs the colluders' states, which only a simulated run provides")]
    NoColluderStates,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// 1 for problems with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Mismatch(_) | HarnessError::Format { .. } => 1,
            _ => 2,
        }
    }
}

/// Graph and local objectives of one configured instance.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: Graph,
    pub problem: Problem<AnyObjective>,
}

/// Ridge data draws every agent's samples in turn from one stream seeded by
/// `seed.data`. Logistic data first plants `x ~ N(0, I)` from the same seed,
/// then draws samples from a second stream.
pub fn build(config: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    config.validate()?;
    let graph = generate_graph(config.agents, config.eta, config.seeds.graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds.data);
    let objectives = match config.problem {
        ProblemKind::Ridge => (0..config.agents)
            .map(|_| AnyObjective::Ridge(Ridge::new(generate_ridge_data(config.samples, config.dim, &mut rng))))
            .collect(),
        ProblemKind::Logistic => {
            let planted = planted_vector(config.dim, config.seeds.data);
            rng.set_stream(1);
            (0..config.agents)
                .map(|_| Ok(AnyObjective::Logistic(Logistic::new(generate_logistic_data(config.samples, &planted, &mut rng))?)))
                .collect::<Result<_, ObjectiveError>>()?
        }
    };
    let problem = Problem::solve(objectives, DEFAULT_OPTIMUM_TOL)?;
    Ok(Experiment { graph, problem })
}

/// Runs the configured solver, keeping transcript and ground truth.
pub fn simulate(config: &ExperimentConfig, experiment: &Experiment) -> Result<RunOutput, HarnessError> {
    let options = RunOptions {
        record_every: Some(config.record_every()),
        keep_transcript: true,
        keep_truth: true,
        ..RunOptions::default()
    };
    Ok(run(&experiment.problem, &experiment.graph, &config.solver, &options)?)
}

/// Checks that a transcript could have come from `config`.
pub fn check_transcript(config: &ExperimentConfig, transcript: &Transcript) -> Result<(), HarnessError> {
    if transcript.n_agents != config.agents {
        return Err(HarnessError::Mismatch(format!(
            "{} agents in the transcript, {} in the config",
            transcript.n_agents, config.agents
        )));
    }
    if transcript.rho != config.solver.rho {
        return Err(HarnessError::Mismatch(format!("rho {} in the transcript, {} in the config", transcript.rho, config.solver.rho)));
    }
    if transcript.dim != config.dim {
        return Err(HarnessError::Mismatch(format!("dimension {} in the transcript, {} in the config", transcript.dim, config.dim)));
    }
    transcript.validate().map_err(|e| HarnessError::Mismatch(e.to_string()))
}

/// Runs the configured attack. `truth` is only used by the colluding attack,
/// whose colluders know their own final duals.
pub fn attack(
    config: &ExperimentConfig,
    transcript: &Transcript,
    truth: Option<&RunOutput>,
) -> Result<AttackReport, HarnessError> {
    check_transcript(config, transcript)?;
    let settings = &config.attack;
    let last = match settings.last {
        Some(last) => last,
        None => transcript.horizon().checked_sub(1).ok_or(AttackError::EmptyTranscript)?,
    };
    let variant = config.solver.variant;
    let report = match settings.method {
        AttackMethod::Exact => exact_recursion_attack(&transcript.truncated(last + 1))?,
        AttackMethod::Terminal => terminal_backward_attack(&transcript.truncated(last + 1))?,
        AttackMethod::LeastSquares => {
            lsq_attack(transcript, variant, last, settings.options, settings.lsqr_tol, settings.lsqr_max_iter)?
        }
        AttackMethod::Colluding => {
            let out = truth.ok_or(HarnessError::NoColluderStates)?;
            let target = settings.agents[0];
            let others = colluder_dual_sum(&out.truth, target, last);
            colluding_attack(transcript, variant, target, last, &others, settings.lsqr_tol, settings.lsqr_max_iter)?
        }
    };
    Ok(report)
}

/// `Σ_{j≠target} y_j` as held after iteration `last`.
pub fn colluder_dual_sum(truth: &GroundTruth, target: usize, last: usize) -> Vec<f64> {
    let dim = truth.initial.first().map_or(0, |s| s.y.len());
    let mut sum = vec![0.0; dim];
    for j in (0..truth.n_agents()).filter(|&j| j != target) {
        for (s, v) in sum.iter_mut().zip(&truth.state_at(j, last + 1).y) {
            *s += v;
        }
    }
    sum
}
