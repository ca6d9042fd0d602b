//! Comparing attack estimates against simulator ground truth.

use alloc::vec::Vec;

use super::{AttackError, AttackReport, MeasurementSystem, RowTag, Unknown};
use crate::linalg::dist;
use crate::objectives::LocalObjective;
use crate::solver::GroundTruth;
use crate::sparse::lsqr;
use crate::transcript::Transcript;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochError {
    pub agent: usize,
    pub epoch: usize,
    /// First iteration at which the epoch's state is held.
    pub start: usize,
    pub err_x: f64,
    pub err_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub epochs: Vec<EpochError>,
    pub max_x: f64,
    pub max_y: f64,
}

impl Score {
    pub fn for_agent(&self, agent: usize) -> impl Iterator<Item = &EpochError> + '_ {
        self.epochs.iter().filter(move |e| e.agent == agent)
    }
}

/// Euclidean errors per estimated epoch.
pub fn score(report: &AttackReport, truth: &GroundTruth) -> Score {
    let mut epochs = Vec::new();
    for t in &report.trajectories {
        let actual = truth.epochs(t.agent);
        for (e, &start) in t.starts.iter().enumerate() {
            epochs.push(EpochError {
                agent: t.agent,
                epoch: e,
                start,
                err_x: dist(&t.x[e], &actual[e].x),
                err_y: dist(&t.y[e], &actual[e].y),
            });
        }
    }
    let max_x = epochs.iter().map(|e| e.err_x).fold(0.0, f64::max);
    let max_y = epochs.iter().map(|e| e.err_y).fold(0.0, f64::max);
    Score { epochs, max_x, max_y }
}

/// Largest `||ŷ_e - ∇f_i(x_e)||` over every epoch after an update.
pub fn gradient_error<O: LocalObjective>(report: &AttackReport, truth: &GroundTruth, objectives: &[O]) -> f64 {
    let mut worst: f64 = 0.0;
    for t in &report.trajectories {
        let actual = truth.epochs(t.agent);
        for (e, y_hat) in t.y.iter().enumerate().skip(1) {
            worst = worst.max(dist(y_hat, &objectives[t.agent].gradient(&actual[e].x)));
        }
    }
    worst
}

/// Ground-truth values of one coordinate laid out like the system's unknowns.
pub fn truth_vector(system: &MeasurementSystem, truth: &GroundTruth, coordinate: usize) -> Vec<f64> {
    system
        .unknowns
        .iter()
        .map(|u| match *u {
            Unknown::X { agent, epoch } => truth.epochs(agent)[epoch].x[coordinate],
            Unknown::Y { agent, epoch } => truth.epochs(agent)[epoch].y[coordinate],
        })
        .collect()
}

/// Largest residual of the true states through the measurement rows.
pub fn system_residual(system: &MeasurementSystem, truth: &GroundTruth) -> f64 {
    system
        .systems
        .iter()
        .enumerate()
        .map(|(c, s)| s.residual_norm(&truth_vector(system, truth, c)))
        .fold(0.0, f64::max)
}

/// Estimation error caused by the rows tagged `tags` alone.
///
/// The least-squares estimate is linear in the right-hand side, so with
/// `A v = b + r` for the true states `v`, the error `v - v̂` splits into
/// `A⁺ r` summed over row groups. Returned per coordinate, laid out like
/// the system's unknowns.
pub fn attributed_error(
    system: &MeasurementSystem,
    truth: &GroundTruth,
    tags: &[RowTag],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Vec<f64>>, AttackError> {
    system
        .systems
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let mut r = s.residual(&truth_vector(system, truth, c));
            for (v, tag) in r.iter_mut().zip(&system.row_tags) {
                if !tags.contains(tag) {
                    *v = 0.0;
                }
            }
            Ok(lsqr(&s.with_rhs(r)?, tol, max_iter)?.solution)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochBound {
    /// Updates between this epoch and the final, pinned one.
    pub n: usize,
    pub start: usize,
    pub err_x: f64,
    pub bound_x: f64,
    pub err_y: f64,
    pub bound_y: f64,
}

impl EpochBound {
    pub fn holds(&self) -> bool {
        self.err_x < self.bound_x && self.err_y < self.bound_y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalBoundCheck {
    pub agent: usize,
    /// `||z^{K+1} - x^{K+1}||` for the pinned agent.
    pub terminal_gap: f64,
    /// `⌊K/N⌋`
    pub cycles: usize,
    /// Epochs `n = 1 ..= ⌊K/N⌋` back from the end.
    pub bounds: Vec<EpochBound>,
}

impl TerminalBoundCheck {
    pub fn holds(&self) -> bool {
        self.bounds.iter().all(EpochBound::holds)
    }
}

/// Checks `||x̂ - x|| < 2ⁿ ε` and `||ŷ - y|| < ρ (2^{⌊K/N⌋+1} - 2ⁿ) ε` for
/// every epoch `n = 1 ..= ⌊K/N⌋` updates before the last.
pub fn terminal_bound_check(
    report: &AttackReport,
    transcript: &Transcript,
    truth: &GroundTruth,
    eps: f64,
) -> Result<TerminalBoundCheck, AttackError> {
    let t = report.trajectories.first().ok_or(AttackError::EmptyTranscript)?;
    let actual = truth.epochs(t.agent);
    let final_epoch = t.epochs() - 1;
    let terminal_gap = dist(transcript.token(report.last + 1), &actual[final_epoch].x);
    if !(terminal_gap < eps) {
        return Err(AttackError::NotConverged { gap: terminal_gap, eps });
    }
    let cycles = report.last / transcript.n_agents;
    let rho = transcript.rho;
    let top = libm::pow(2.0, (cycles + 1) as f64);
    let bounds = (1..=cycles.min(final_epoch))
        .map(|n| {
            let e = final_epoch - n;
            let scale = libm::pow(2.0, n as f64);
            EpochBound {
                n,
                start: t.starts[e],
                err_x: dist(&t.x[e], &actual[e].x),
                bound_x: scale * eps,
                err_y: dist(&t.y[e], &actual[e].y),
                bound_y: rho * (top - scale) * eps,
            }
        })
        .collect();
    Ok(TerminalBoundCheck { agent: t.agent, terminal_gap, cycles, bounds })
}

/// One CSV-ready line: estimate and (optionally) truth for one coordinate of
/// one agent at the start of iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub k: usize,
    pub coordinate: usize,
    pub truth_x: Option<f64>,
    pub est_x: f64,
    pub truth_y: Option<f64>,
    pub est_y: f64,
}

impl ReportRow {
    pub fn abs_err_x(&self) -> Option<f64> {
        self.truth_x.map(|t| (t - self.est_x).abs())
    }

    pub fn abs_err_y(&self) -> Option<f64> {
        self.truth_y.map(|t| (t - self.est_y).abs())
    }
}

/// Rows for `k = 0 ..= last + 1` and every coordinate of `agent`.
pub fn report_rows(report: &AttackReport, agent: usize, truth: Option<&GroundTruth>) -> Vec<ReportRow> {
    let Some(t) = report.trajectory(agent) else { return Vec::new() };
    let p = t.x.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity((report.last + 2) * p);
    for k in 0..=report.last + 1 {
        let actual = truth.map(|g| g.state_at(agent, k));
        for c in 0..p {
            rows.push(ReportRow {
                k,
                coordinate: c,
                truth_x: actual.map(|s| s.x[c]),
                est_x: t.x_at(k)[c],
                truth_y: actual.map(|s| s.y[c]),
                est_y: t.y_at(k)[c],
            });
        }
    }
    rows
}

/// `||x||`-relative summary used by reports: largest final-epoch errors.
pub fn final_epoch_errors(report: &AttackReport, truth: &GroundTruth) -> (f64, f64) {
    let s = score(report, truth);
    let mut worst = (0.0f64, 0.0f64);
    for t in &report.trajectories {
        if let Some(e) = s.for_agent(t.agent).last() {
            worst = (worst.0.max(e.err_x), worst.1.max(e.err_y));
        }
    }
    worst
}
