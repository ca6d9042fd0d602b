//! Command-line front end. `main` only forwards to [`run_cli`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use iadmm_core::solver::{RunSummary, Termination};

use crate::config::ExperimentConfig;
use crate::experiment::{self, HarnessError};
use crate::formats::{self, float, write_atomic};
use crate::sweep;
use crate::verify::{verify, Status};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "iadmm", version, about = "Token-passing ADMM simulator and transcript attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Experiment file (`section.key = value` lines).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Replace the graph, data and solver seeds.
    #[arg(long, value_name = "INT")]
    pub seed_override: Option<u64>,
    /// Suppress progress and summary output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one run; writes trace, transcript, graph and summary.
    Run(Common),
    /// Attack a transcript (or a fresh run when none is given).
    Attack {
        #[command(flatten)]
        common: Common,
        /// Transcript CSV written by `run`.
        #[arg(long, value_name = "PATH")]
        transcript: Option<PathBuf>,
    },
    /// Run the configured grid; `--sweep` adds or overrides `sweep.*` keys.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        sweep: Option<PathBuf>,
    },
    /// Run the invariant suite at small scale.
    Verify {
        #[arg(long)]
        quiet: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed_override {
        config.override_seed(seed);
    }
    config.validate()?;
    Ok(config)
}

fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn termination(t: Termination) -> String {
    match t {
        Termination::Converged => "converged".into(),
        Termination::MaxIters => "max_iters".into(),
        Termination::Diverged { k } => format!("diverged at k={k}"),
    }
}

/// `key=value` lines describing a finished run.
pub fn summary_text(config: &ExperimentConfig, s: &RunSummary) -> String {
    let yes_no = |b: bool| if b { "satisfied" } else { "not satisfied" };
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    put("variant", config.solver.variant.name().into());
    put("termination", termination(s.termination));
    put("iterations", s.iterations.to_string());
    put("comm_units", s.comm_units.to_string());
    put("final_accuracy", float(s.final_accuracy));
    put("best_accuracy", float(s.best_accuracy));
    put("kkt_gradient", float(s.kkt.gradient));
    put("kkt_dual_sum", float(s.kkt.dual_sum));
    put("kkt_consensus", float(s.kkt.consensus));
    put("max_token_gap", float(s.max_token_gap));
    put("lipschitz", float(s.regime.lipschitz));
    put("exact_descent_condition", yes_no(s.regime.exact_descent).into());
    put("perturbed_descent_condition", yes_no(s.regime.perturbed_descent).into());
    put("gamma_floor", s.regime.gamma_floor.map_or_else(String::new, float));
    put("max_lagrangian_increase", float(s.max_lagrangian_increase));
    put("max_lagrangian_increase_after_first_cycle", float(s.max_lagrangian_increase_warm));
    out
}

fn cmd_run(common: &Common) -> Result<(), HarnessError> {
    let config = load(common)?;
    let experiment = experiment::build(&config)?;
    let out = experiment::simulate(&config, &experiment)?;
    let dir = &common.out;
    fs::create_dir_all(dir)?;
    write_atomic(&out_file(dir, "config.txt"), config.to_string().as_bytes())?;
    write_atomic(&out_file(dir, "graph.txt"), formats::graph_text(&experiment.graph).as_bytes())?;
    write_atomic(&out_file(dir, "trace.csv"), &formats::trace_csv(&out.trace.records)?)?;
    write_atomic(&out_file(dir, "transcript.csv"), &formats::transcript_csv(&out.transcript)?)?;
    let summary = summary_text(&config, &out.trace.summary);
    write_atomic(&out_file(dir, "summary.txt"), summary.as_bytes())?;
    write_atomic(&out_file(dir, "plot.gp"), formats::gnuplot_script("trace.csv", None).as_bytes())?;
    if config.write_datasets {
        let data_dir = dir.join("datasets");
        fs::create_dir_all(&data_dir)?;
        for (i, f) in experiment.problem.objectives.iter().enumerate() {
            write_atomic(&data_dir.join(format!("agent_{:03}.csv", i + 1)), &formats::dataset_csv(f.data())?)?;
        }
    }
    if !common.quiet {
        let s = &out.trace.summary;
        println!(
            "{} {}: accuracy {:.3e} after {} comm units, kkt {:.2e}/{:.2e}/{:.2e}, exact-descent condition {}, perturbed-descent condition {}",
            config.solver.variant.name(),
            termination(s.termination),
            s.final_accuracy,
            s.comm_units,
            s.kkt.gradient,
            s.kkt.dual_sum,
            s.kkt.consensus,
            if s.regime.exact_descent { "met" } else { "not met" },
            if s.regime.perturbed_descent { "met" } else { "not met" },
        );
    }
    Ok(())
}

fn cmd_attack(common: &Common, transcript_path: Option<&Path>) -> Result<(), HarnessError> {
    let config = load(common)?;
    let experiment = experiment::build(&config)?;
    let simulated = experiment::simulate(&config, &experiment)?;
    let transcript = match transcript_path {
        Some(path) => formats::read_transcript(&fs::read_to_string(path)?)?,
        None => simulated.transcript.clone(),
    };
    experiment::check_transcript(&config, &transcript)?;
    // Ground truth is only attached when the config reproduces the transcript.
    let truth = (simulated.transcript == transcript).then_some(&simulated);
    if truth.is_none() && !common.quiet {
        eprintln!("transcript differs from the configured run; truth columns left empty");
    }
    let report = experiment::attack(&config, &transcript, truth)?;
    let agents: Vec<usize> = match config.attack.method {
        crate::config::AttackMethod::Terminal => report.trajectories.iter().map(|t| t.agent).collect(),
        crate::config::AttackMethod::Colluding => vec![config.attack.agents[0]],
        _ => config.attack.agents.clone(),
    };
    fs::create_dir_all(&common.out)?;
    let csv = formats::attack_csv(&report, &agents, truth.map(|o| &o.truth))?;
    write_atomic(&out_file(&common.out, "attack.csv"), &csv)?;
    write_atomic(
        &out_file(&common.out, "attack.gp"),
        formats::gnuplot_script("trace.csv", Some("attack.csv")).as_bytes(),
    )?;
    if !common.quiet {
        let solve = report.solve.as_ref().map_or_else(String::new, |s| {
            format!(", system {}x{} residual {:.2e} converged {}", s.rows, s.cols, s.residual_norm, s.converged)
        });
        let errors = truth.map_or_else(String::new, |o| {
            let s = iadmm_core::adversary::scoring::score(&report, &o.truth);
            format!(", max errors x {:.3e} y {:.3e}", s.max_x, s.max_y)
        });
        println!("{} attack over {} iterations{solve}{errors}", config.attack.method.name(), report.last + 1);
    }
    Ok(())
}

fn cmd_sweep(common: &Common, sweep_path: Option<&Path>) -> Result<(), HarnessError> {
    let mut config = load(common)?;
    if let Some(path) = sweep_path {
        config.merge(&fs::read_to_string(path)?)?;
        config.validate()?;
    }
    let rows = sweep::sweep(&config)?;
    fs::create_dir_all(&common.out)?;
    write_atomic(&out_file(&common.out, "sweep.csv"), &sweep::sweep_csv(&rows)?)?;
    if !common.quiet {
        let failed = rows.iter().filter(|r| r.status.starts_with("error")).count();
        println!("{} rows over {} runs, {failed} failed runs", rows.len(), sweep::grid(&config).len());
    }
    Ok(())
}

fn report_error(e: &HarnessError) -> u8 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Attack { common, transcript } => cmd_attack(common, transcript.as_deref()),
        Command::Sweep { common, sweep } => cmd_sweep(common, sweep.as_deref()),
        Command::Verify { quiet } => {
            let quiet = *quiet;
            let report = verify(|o| {
                if !quiet || o.status == Status::Fail {
                    println!("{o}");
                }
            });
            if !quiet {
                println!("verify finished in {:.1} s", report.seconds);
            }
            return if report.passed() { EXIT_OK } else { EXIT_VERIFY };
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(&e),
    }
}
