//! Passive attacks on the token transcript.
//!
//! Everything here consumes a [`Transcript`] plus public protocol
//! parameters. Ground truth only enters through [`scoring`].

mod lsq;
mod recursion;
pub mod scoring;

use alloc::vec::Vec;

pub use lsq::{
    build_colluding_system, build_ls_system, colluding_attack, count_colluding, count_equations_unknowns, lsq_attack, Counts, LsOptions,
    MeasurementSystem, RowTag, Unknown,
};
pub use recursion::{exact_recursion_attack, terminal_backward_attack};

use crate::linalg::LinalgError;
use crate::transcript::TranscriptError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("transcript has no observations")]
    EmptyTranscript,
    #[error("attack needs {needed} observed iterations, transcript has {have}")]
    HorizonTooShort { needed: usize, have: usize },
    #[error("agent {0} never updated, so its last state cannot be pinned")]
    NeverActivated(usize),
    #[error("target agent {target} is outside 0..{n}")]
    InvalidTarget { target: usize, n: usize },
    #[error("colluder dual sum has {got} coordinates, expected {expected}")]
    DualDimension { expected: usize, got: usize },
    #[error("terminal gap {gap:e} is not below eps = {eps:e}")]
    NotConverged { gap: f64, eps: f64 },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One agent's estimated states by epoch: epoch 0 is the initial state and
/// epoch `e` the state after its `e`-th update.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrajectory {
    pub agent: usize,
    /// Iteration at which each epoch begins (0, then `k + 1` for every
    /// update at iteration `k`).
    pub starts: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl AgentTrajectory {
    pub fn epochs(&self) -> usize {
        self.starts.len()
    }

    /// Epoch in force at the start of iteration `k`.
    pub fn epoch_at(&self, k: usize) -> usize {
        self.starts.partition_point(|&s| s <= k) - 1
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[self.epoch_at(k)]
    }

    pub fn y_at(&self, k: usize) -> &[f64] {
        &self.y[self.epoch_at(k)]
    }

    /// Gradient estimates `∇f(x_e) = y_e` for every epoch after an update
    /// (exact-prox runs only).
    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.y[1..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveInfo {
    /// Rows and columns per coordinate.
    pub rows: usize,
    pub cols: usize,
    /// Largest `||A v - b||` over coordinates.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    /// Last iteration whose update the estimates cover.
    pub last: usize,
    pub trajectories: Vec<AgentTrajectory>,
    /// Present for least-squares attacks.
    pub solve: Option<SolveInfo>,
}

impl AttackReport {
    pub fn trajectory(&self, agent: usize) -> Option<&AgentTrajectory> {
        self.trajectories.iter().find(|t| t.agent == agent)
    }
}

/// Epoch start iterations of every agent over iterations `0..=last`.
pub(crate) fn epoch_starts(
    transcript: &crate::transcript::Transcript,
    last: usize,
) -> Result<Vec<Vec<usize>>, AttackError> {
    if transcript.horizon() == 0 {
        return Err(AttackError::EmptyTranscript);
    }
    if last >= transcript.horizon() {
        return Err(AttackError::HorizonTooShort { needed: last + 1, have: transcript.horizon() });
    }
    transcript.validate()?;
    let mut starts = alloc::vec![alloc::vec![0usize]; transcript.n_agents];
    for k in 0..=last {
        starts[transcript.active(k)].push(k + 1);
    }
    Ok(starts)
}
