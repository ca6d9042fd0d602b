//! The small-scale invariant suite behind `iadmm verify`.

use std::fmt;
use std::time::Instant;

use iadmm_core::solver::Variant;

use crate::checks;
use crate::config::ExperimentConfig;
use crate::experiment::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Reported but never fails the suite.
    Info,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, ok: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn info(name: &'static str, detail: String) -> CheckOutcome {
    CheckOutcome { name, status: Status::Info, detail }
}

type Check = fn() -> Result<Vec<CheckOutcome>, HarnessError>;

fn convergence() -> Result<Vec<CheckOutcome>, HarnessError> {
    // K = 2000 is too short for the full-scale thresholds; those live in
    // the acceptance suite.
    let c = checks::convergence(5, 1.0, 0, 400)?;
    let s = &c.summary;
    Ok(vec![outcome(
        "convergence",
        s.final_accuracy < 1e-4 && s.kkt.max() < 1e-4,
        format!("accuracy {:.2e}, kkt {:.2e} after {} iterations", s.final_accuracy, s.kkt.max(), s.iterations),
    )])
}

fn exact_descent() -> Result<Vec<CheckOutcome>, HarnessError> {
    let d = checks::exact_descent(10, 0, 100)?;
    Ok(vec![
        outcome(
            "descent with rho = 2L+2 after the first cycle",
            d.guaranteed && d.max_increase_warm <= 1e-12 && d.min_gap_warm >= -1e-9,
            format!("largest increase {:.2e}, min L - F* {:.2e}", d.max_increase_warm, d.min_gap_warm),
        ),
        info("descent with rho = 2L+2 in the first cycle", format!("largest increase {:.2e}", d.max_increase)),
    ])
}

fn perturbed_descent() -> Result<Vec<CheckOutcome>, HarnessError> {
    let d = checks::perturbed_descent(6, 0, 100, 1.01)?;
    let below = checks::perturbed_descent(6, 0, 20, 0.5)?;
    Ok(vec![
        outcome(
            "descent above the step-size floor after the first cycle",
            d.guaranteed && d.max_increase_warm <= 1e-12 && d.min_gap_warm >= -1e-9,
            format!("largest increase {:.2e}, min L - F* {:.2e}", d.max_increase_warm, d.min_gap_warm),
        ),
        info(
            "descent above the step-size floor in the first cycle",
            format!("largest increase {:.2e}, min L - F* {:.2e}", d.max_increase, d.min_gap),
        ),
        info(
            "step size below the floor",
            format!(
                "monotonicity {} (largest increase {:.2e})",
                if below.guaranteed { "guaranteed" } else { "not guaranteed" },
                below.max_increase_warm
            ),
        ),
    ])
}

fn conservation() -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut worst = 0.0f64;
    for variant in Variant::ALL {
        for seed in 0..3 {
            worst = worst.max(checks::token_conservation(variant, 10, seed, 100, false)?);
        }
    }
    let mutant = checks::token_conservation(Variant::PiAdmm1, 10, 0, 10, true)?;
    Ok(vec![
        outcome("token conservation", worst <= 1e-10, format!("largest gap {worst:.2e} over every variant")),
        outcome(
            "token conservation catches a corrupted token update",
            mutant > 1e-6,
            format!("mutant gap {mutant:.2e}"),
        ),
    ])
}

fn attacks() -> Result<Vec<CheckOutcome>, HarnessError> {
    let exact = checks::exact_attack(10, 0, 50)?;
    let mut bounds_hold = true;
    let mut cycles = 0;
    for seed in 0..3 {
        let b = checks::terminal_bounds(10, seed, 1e-4)?;
        bounds_hold &= b.holds();
        cycles = cycles.max(b.cycles);
    }
    let mut residual = 0.0f64;
    for variant in [Variant::Iadmm, Variant::IadmmRandInit, Variant::PiAdmm2, Variant::WadmmBaseline] {
        residual = residual.max(checks::system_truth_residual(variant, 10, 0, 20)?);
    }
    let mut leak = 0.0f64;
    for variant in Variant::ALL {
        leak = leak.max(checks::final_cycle_leakage(variant, 5, 0, 1e-6)?);
    }
    let counts = checks::count_mismatches(&[10, 100, 1000], &[3, 10, 100]);
    Ok(vec![
        outcome("exact attack on deterministic runs", exact <= 1e-9, format!("largest error {exact:.2e}")),
        outcome("terminal attack bounds", bounds_hold, format!("3 seeds, up to {cycles} cycles")),
        outcome("measurement rows hold for the true states", residual <= 1e-9, format!("largest residual {residual:.2e}")),
        outcome("converged runs leak final states", leak <= 1e-5, format!("largest final-cycle error {leak:.2e}")),
        outcome("equation and unknown counts", counts.is_empty(), counts.join("; ")),
    ])
}

fn noise() -> Result<Vec<CheckOutcome>, HarnessError> {
    let f = checks::noise_floor(5, 1.0, 0, 400, 0.1)?;
    Ok(vec![
        outcome(
            "primal noise sets an accuracy floor",
            f.noisy_best >= 10.0 * f.clean_best,
            format!("best accuracy {:.2e} with noise, {:.2e} without", f.noisy_best, f.clean_best),
        ),
        outcome("zero noise reproduces random init", f.zero_noise_identical, String::new()),
    ])
}

fn numerics() -> Result<Vec<CheckOutcome>, HarnessError> {
    let (ridge, logistic) = checks::gradient_checks(0, 200);
    let planted = checks::lsqr_planted(0, 120, 40)?;
    Ok(vec![
        outcome(
            "finite-difference gradients",
            ridge <= 1e-9 && logistic <= 1e-5,
            format!("ridge {ridge:.2e}, logistic {logistic:.2e}"),
        ),
        outcome("lsqr recovers planted solutions", planted <= 1e-8, format!("relative error {planted:.2e}")),
    ])
}

fn config_round_trip() -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut c = ExperimentConfig::default();
    c.merge("solver.gamma = uniform:0.9,1.1\nattack.agents = 1,4\nsweep.eta = 0.3,0.5\nsolver.rho = 0.1\n")?;
    let back: ExperimentConfig = c.to_string().parse()?;
    Ok(vec![outcome("config round trip", back == c, String::new())])
}

const SUITE: [Check; 8] =
    [convergence, exact_descent, perturbed_descent, conservation, attacks, noise, numerics, config_round_trip];

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub outcomes: Vec<CheckOutcome>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.status != Status::Fail)
    }
}

/// Runs every check; a check that errors is reported as a failure.
pub fn verify(mut on_outcome: impl FnMut(&CheckOutcome)) -> VerifyReport {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for check in SUITE {
        let produced = check().unwrap_or_else(|e| vec![outcome("check aborted", false, e.to_string())]);
        for o in produced {
            on_outcome(&o);
            outcomes.push(o);
        }
    }
    VerifyReport { outcomes, seconds: start.elapsed().as_secs_f64() }
}
