//! Flat `section.key = value` experiment files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys take the defaults of [`ExperimentConfig::default`].
//! Agent indices are 1-based in the file and 0-based in memory.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use iadmm_core::adversary::LsOptions;
use iadmm_core::solver::{GammaDist, SolverConfig, Variant, XUpdateMode};
use iadmm_core::topology::target_edge_count;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self { line: None, key: key.to_string(), message: message.into() }
    }

    fn at(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Ridge,
    Logistic,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Ridge => "ridge",
            ProblemKind::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    /// Forward replay from known zero initial states.
    Exact,
    /// Backward walk from the last token for the last active agent.
    Terminal,
    LeastSquares,
    /// Everyone but the first configured agent shares their final duals.
    Colluding,
}

impl AttackMethod {
    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Exact => "exact",
            AttackMethod::Terminal => "terminal",
            AttackMethod::LeastSquares => "lsq",
            AttackMethod::Colluding => "colluding",
        }
    }

    const ALL: [AttackMethod; 4] =
        [AttackMethod::Exact, AttackMethod::Terminal, AttackMethod::LeastSquares, AttackMethod::Colluding];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub graph: u64,
    pub data: u64,
    pub solver: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSettings {
    pub method: AttackMethod,
    pub options: LsOptions,
    /// Agents whose estimates are written out (0-based).
    pub agents: Vec<usize>,
    pub lsqr_tol: f64,
    /// `None` picks a size-based default.
    pub lsqr_max_iter: Option<usize>,
    /// Convergence tolerance the terminal attack assumes.
    pub eps: f64,
    /// Last covered iteration; `None` uses the whole transcript.
    pub last: Option<usize>,
}

/// Grid axes for `sweep`; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSpec {
    pub agents: Vec<usize>,
    pub eta: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub variant: Vec<Variant>,
    /// Runs per grid point; run `s` adds `s` to every base seed.
    pub seeds: usize,
    /// Stop each run after this many communication units.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub agents: usize,
    pub samples: usize,
    pub dim: usize,
    pub eta: f64,
    /// `solver.seed` mirrors `seeds.solver`.
    pub solver: SolverConfig,
    pub seeds: Seeds,
    /// Trace cadence; `None` means once per cycle.
    pub record_every: Option<usize>,
    pub write_datasets: bool,
    pub attack: AttackSettings,
    pub sweep: SweepSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Ridge,
            agents: 100,
            samples: 30,
            dim: 2,
            eta: 0.3,
            solver: SolverConfig { max_iters: 200_000, ..SolverConfig::default() },
            seeds: Seeds { graph: 0, data: 0, solver: 0 },
            record_every: None,
            write_datasets: false,
            attack: AttackSettings {
                method: AttackMethod::LeastSquares,
                options: LsOptions::default(),
                agents: vec![0],
                lsqr_tol: iadmm_core::sparse::DEFAULT_LSQR_TOL,
                lsqr_max_iter: None,
                eps: 1e-4,
                last: None,
            },
            sweep: SweepSpec { seeds: 1, ..SweepSpec::default() },
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e| ConfigError::new(key, format!("cannot parse {raw:?}: {e}")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::new(key, format!("expected true or false, got {raw:?}"))),
    }
}

fn parse_list<T>(key: &str, raw: &str, item: impl Fn(&str, &str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| item(key, s.trim())).collect()
}

fn parse_variant(key: &str, raw: &str) -> Result<Variant, ConfigError> {
    Variant::from_name(raw).ok_or_else(|| {
        let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
        ConfigError::new(key, format!("unknown variant {raw:?}, expected one of {}", names.join(", ")))
    })
}

fn parse_agent(key: &str, raw: &str) -> Result<usize, ConfigError> {
    match parse_value::<usize>(key, raw)? {
        0 => Err(ConfigError::new(key, "agents are numbered from 1")),
        a => Ok(a - 1),
    }
}

fn parse_gamma(key: &str, raw: &str) -> Result<GammaDist, ConfigError> {
    let (kind, args) = raw.split_once(':').ok_or_else(|| {
        ConfigError::new(key, format!("expected constant:C, uniform:LO,HI or floor:MARGIN, got {raw:?}"))
    })?;
    match kind {
        "constant" => Ok(GammaDist::Constant(parse_value(key, args)?)),
        "floor" => Ok(GammaDist::StepFloor { margin: parse_value(key, args)? }),
        "uniform" => match parse_list(key, args, parse_value::<f64>)?.as_slice() {
            &[lo, hi] => Ok(GammaDist::Uniform { lo, hi }),
            _ => Err(ConfigError::new(key, "uniform needs exactly two bounds")),
        },
        _ => Err(ConfigError::new(key, format!("unknown gamma distribution {kind:?}"))),
    }
}

fn gamma_text(g: GammaDist) -> String {
    match g {
        GammaDist::Constant(c) => format!("constant:{c}"),
        GammaDist::Uniform { lo, hi } => format!("uniform:{lo},{hi}"),
        GammaDist::StepFloor { margin } => format!("floor:{margin}"),
    }
}

fn optional_count(key: &str, raw: &str) -> Result<Option<usize>, ConfigError> {
    if raw == "auto" {
        Ok(None)
    } else {
        Ok(Some(parse_value(key, raw)?))
    }
}

fn optional_text(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn merge(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line, "expected key = value").at(i + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::new(key, "duplicate key").at(i + 1));
            }
            self.set(key, value.trim()).map_err(|e| e.at(i + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "problem.kind" => {
                self.problem = match raw {
                    "ridge" => ProblemKind::Ridge,
                    "logistic" => ProblemKind::Logistic,
                    _ => return Err(ConfigError::new(key, format!("expected ridge or logistic, got {raw:?}"))),
                }
            }
            "problem.agents" => self.agents = parse_value(key, raw)?,
            "problem.samples" => self.samples = parse_value(key, raw)?,
            "problem.dim" => self.dim = parse_value(key, raw)?,
            "graph.eta" => self.eta = parse_value(key, raw)?,
            "solver.variant" => self.solver.variant = parse_variant(key, raw)?,
            "solver.rho" => self.solver.rho = parse_value(key, raw)?,
            "solver.x_update" => {
                self.solver.x_update = match raw {
                    "exact_prox" => XUpdateMode::ExactProx,
                    "first_order" => XUpdateMode::FirstOrder,
                    _ => return Err(ConfigError::new(key, format!("expected exact_prox or first_order, got {raw:?}"))),
                }
            }
            "solver.gamma" => self.solver.gamma = parse_gamma(key, raw)?,
            "solver.sigma" => self.solver.sigma = parse_value(key, raw)?,
            "solver.init_lo" => self.solver.init.lo = parse_value(key, raw)?,
            "solver.init_hi" => self.solver.init.hi = parse_value(key, raw)?,
            "solver.max_iters" => self.solver.max_iters = parse_value(key, raw)?,
            "solver.stop_eps" => self.solver.stop_eps = parse_value(key, raw)?,
            "seed.graph" => self.seeds.graph = parse_value(key, raw)?,
            "seed.data" => self.seeds.data = parse_value(key, raw)?,
            "seed.solver" => {
                self.seeds.solver = parse_value(key, raw)?;
                self.solver.seed = self.seeds.solver;
            }
            "output.record_every" => self.record_every = optional_count(key, raw)?,
            "output.datasets" => self.write_datasets = parse_bool(key, raw)?,
            "attack.method" => {
                self.attack.method = AttackMethod::ALL.into_iter().find(|m| m.name() == raw).ok_or_else(|| {
                    ConfigError::new(key, format!("expected exact, terminal, lsq or colluding, got {raw:?}"))
                })?
            }
            "attack.kkt_row" => self.attack.options.kkt_row = parse_bool(key, raw)?,
            "attack.pin_last_cycle" => self.attack.options.pin_last_cycle = parse_bool(key, raw)?,
            "attack.agents" => self.attack.agents = parse_list(key, raw, parse_agent)?,
            "attack.lsqr_tol" => self.attack.lsqr_tol = parse_value(key, raw)?,
            "attack.lsqr_max_iter" => self.attack.lsqr_max_iter = optional_count(key, raw)?,
            "attack.eps" => self.attack.eps = parse_value(key, raw)?,
            "attack.last" => self.attack.last = optional_count(key, raw)?,
            "sweep.agents" => self.sweep.agents = parse_list(key, raw, parse_value)?,
            "sweep.eta" => self.sweep.eta = parse_list(key, raw, parse_value)?,
            "sweep.rho" => self.sweep.rho = parse_list(key, raw, parse_value)?,
            "sweep.sigma" => self.sweep.sigma = parse_list(key, raw, parse_value)?,
            "sweep.variant" => self.sweep.variant = parse_list(key, raw, parse_variant)?,
            "sweep.seeds" => self.sweep.seeds = parse_value(key, raw)?,
            "sweep.budget" => self.sweep.budget = optional_count(key, raw)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Replaces every seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = Seeds { graph: seed, data: seed, solver: seed };
        self.solver.seed = seed;
    }

    /// Checks every module precondition that can be checked before running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agents < 3 {
            return Err(ConfigError::new("problem.agents", format!("need at least 3 agents, got {}", self.agents)));
        }
        if self.samples == 0 {
            return Err(ConfigError::new("problem.samples", "need at least one sample per agent"));
        }
        if self.dim == 0 {
            return Err(ConfigError::new("problem.dim", "dimension must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(ConfigError::new("graph.eta", format!("must lie in (0, 1], got {}", self.eta)));
        }
        let edges = target_edge_count(self.agents, self.eta);
        if edges < self.agents {
            return Err(ConfigError::new(
                "graph.eta",
                format!("{} agents at density {} give {edges} edges, fewer than the ring needs", self.agents, self.eta),
            ));
        }
        if self.problem == ProblemKind::Logistic && self.solver.x_update == XUpdateMode::ExactProx {
            return Err(ConfigError::new("solver.x_update", "logistic objectives need first_order"));
        }
        self.solver.validate().map_err(|e| {
            let key = match e {
                iadmm_core::SolverError::InvalidRho(_) => "solver.rho",
                iadmm_core::SolverError::InvalidSigma(_) => "solver.sigma",
                iadmm_core::SolverError::InvalidInit { .. } => "solver.init_lo",
                iadmm_core::SolverError::ZeroIterations => "solver.max_iters",
                iadmm_core::SolverError::InvalidStopEps(_) => "solver.stop_eps",
                _ => "solver.gamma",
            };
            ConfigError::new(key, e.to_string())
        })?;
        if let Some(0) = self.record_every {
            return Err(ConfigError::new("output.record_every", "must be positive or auto"));
        }
        if let Some(&a) = self.attack.agents.iter().find(|&&a| a >= self.agents) {
            return Err(ConfigError::new("attack.agents", format!("agent {} exceeds {}", a + 1, self.agents)));
        }
        if self.attack.method == AttackMethod::Colluding && self.attack.agents.is_empty() {
            return Err(ConfigError::new("attack.agents", "colluding attack needs a target"));
        }
        if !(self.attack.lsqr_tol > 0.0) {
            return Err(ConfigError::new("attack.lsqr_tol", "must be positive"));
        }
        if !(self.attack.eps > 0.0) {
            return Err(ConfigError::new("attack.eps", "must be positive"));
        }
        if self.sweep.seeds == 0 {
            return Err(ConfigError::new("sweep.seeds", "need at least one seed"));
        }
        Ok(())
    }

    pub fn record_every(&self) -> usize {
        self.record_every.unwrap_or(self.agents)
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.merge(text)?;
        Ok(config)
    }
}

impl fmt::Display for ExperimentConfig {
    /// Every key, in the order `merge` documents them. Floats use the
    /// shortest representation that reads back to the same value.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.solver;
        let a = &self.attack;
        let w = &self.sweep;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}");
        put("problem.kind", self.problem.name().into())?;
        put("problem.agents", self.agents.to_string())?;
        put("problem.samples", self.samples.to_string())?;
        put("problem.dim", self.dim.to_string())?;
        put("graph.eta", self.eta.to_string())?;
        put("solver.variant", s.variant.name().into())?;
        put("solver.rho", s.rho.to_string())?;
        put(
            "solver.x_update",
            match s.x_update {
                XUpdateMode::ExactProx => "exact_prox".into(),
                XUpdateMode::FirstOrder => "first_order".into(),
            },
        )?;
        put("solver.gamma", gamma_text(s.gamma))?;
        put("solver.sigma", s.sigma.to_string())?;
        put("solver.init_lo", s.init.lo.to_string())?;
        put("solver.init_hi", s.init.hi.to_string())?;
        put("solver.max_iters", s.max_iters.to_string())?;
        put("solver.stop_eps", s.stop_eps.to_string())?;
        put("seed.graph", self.seeds.graph.to_string())?;
        put("seed.data", self.seeds.data.to_string())?;
        put("seed.solver", self.seeds.solver.to_string())?;
        put("output.record_every", optional_text(self.record_every))?;
        put("output.datasets", self.write_datasets.to_string())?;
        put("attack.method", a.method.name().into())?;
        put("attack.kkt_row", a.options.kkt_row.to_string())?;
        put("attack.pin_last_cycle", a.options.pin_last_cycle.to_string())?;
        put("attack.agents", join(&a.agents, |i| (i + 1).to_string()))?;
        put("attack.lsqr_tol", a.lsqr_tol.to_string())?;
        put("attack.lsqr_max_iter", optional_text(a.lsqr_max_iter))?;
        put("attack.eps", a.eps.to_string())?;
        put("attack.last", optional_text(a.last))?;
        put("sweep.agents", join(&w.agents, ToString::to_string))?;
        put("sweep.eta", join(&w.eta, ToString::to_string))?;
        put("sweep.rho", join(&w.rho, ToString::to_string))?;
        put("sweep.sigma", join(&w.sigma, ToString::to_string))?;
        put("sweep.variant", join(&w.variant, |v| v.name().to_string()))?;
        put("sweep.seeds", w.seeds.to_string())?;
        put("sweep.budget", optional_text(w.budget))?;
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(c.to_string().parse::<ExperimentConfig>().unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn reads_sections_and_comments() {
        let c: ExperimentConfig = "# ridge\nproblem.agents = 20\n\nsolver.gamma = uniform:0.9, 1.1\nattack.agents = 1,3\n"
            .parse()
            .unwrap();
        assert_eq!(c.agents, 20);
        assert_eq!(c.solver.gamma, GammaDist::Uniform { lo: 0.9, hi: 1.1 });
        assert_eq!(c.attack.agents, vec![0, 2]);
    }

    #[test]
    fn errors_name_the_field_and_line() {
        let e = "problem.agents = 20\nsolver.rho = ten\n".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (Some(2), "solver.rho"));
        let e = "solver.speed = 1".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!(e.message, "unknown key");
        let e = "solver.rho = 1\nsolver.rho = 2".parse::<ExperimentConfig>().unwrap_err();
        assert_eq!(e.message, "duplicate key");
        assert!("attack.agents = 0".parse::<ExperimentConfig>().is_err());
        assert!("solver.gamma = normal:1".parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn validation_points_at_fields() {
        let key = |text: &str| text.parse::<ExperimentConfig>().unwrap().validate().unwrap_err().key;
        assert_eq!(key("problem.agents = 2"), "problem.agents");
        assert_eq!(key("solver.rho = -1"), "solver.rho");
        assert_eq!(key("problem.agents = 10\ngraph.eta = 0.1"), "graph.eta");
        assert_eq!(key("problem.kind = logistic"), "solver.x_update");
        assert_eq!(key("problem.agents = 5\ngraph.eta = 1\nattack.agents = 6"), "attack.agents");
        assert_eq!(key("solver.gamma = uniform:0,1"), "solver.gamma");
    }

    #[test]
    fn seed_override_replaces_all_seeds() {
        let mut c = ExperimentConfig::default();
        c.override_seed(9);
        assert_eq!(c.seeds, Seeds { graph: 9, data: 9, solver: 9 });
        assert_eq!(c.solver.seed, 9);
    }
}
