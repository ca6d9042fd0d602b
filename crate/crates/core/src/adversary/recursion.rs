//! Closed-form reconstructions from the two-term recursion linking an
//! agent's consecutive states to the token increments.
//!
//! With `Δ = z^{k+1} - z^k` and the unperturbed updates,
//! `x' = (NΔ + z^k + x)/2` and `y' = y + (ρ/2)(z^k - NΔ - x)`.

use alloc::vec;
use alloc::vec::Vec;

use super::{epoch_starts, AgentTrajectory, AttackError, AttackReport};
use crate::transcript::Transcript;

fn forward(transcript: &Transcript, k: usize, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = transcript.n_agents as f64;
    let rho = transcript.rho;
    let z = transcript.token(k);
    let z_next = transcript.token(k + 1);
    let mut x_next = vec![0.0; x.len()];
    let mut y_next = vec![0.0; y.len()];
    for c in 0..x.len() {
        let n_delta = n * (z_next[c] - z[c]);
        x_next[c] = 0.5 * (n_delta + z[c] + x[c]);
        y_next[c] = y[c] + 0.5 * rho * (z[c] - n_delta - x[c]);
    }
    (x_next, y_next)
}

/// Replays every update from known zero initial states. Exact for the
/// deterministic variants; for randomized ones the unknown start makes the
/// estimates wrong by a factor that halves per update in `x` only.
pub fn exact_recursion_attack(transcript: &Transcript) -> Result<AttackReport, AttackError> {
    let last = transcript.horizon().checked_sub(1).ok_or(AttackError::EmptyTranscript)?;
    let starts = epoch_starts(transcript, last)?;
    let p = transcript.dim;
    let mut trajectories: Vec<AgentTrajectory> = starts
        .into_iter()
        .enumerate()
        .map(|(agent, starts)| AgentTrajectory { agent, starts, x: vec![vec![0.0; p]], y: vec![vec![0.0; p]] })
        .collect();
    for k in 0..=last {
        let t = &mut trajectories[transcript.active(k)];
        let (x, y) = forward(transcript, k, t.x.last().unwrap(), t.y.last().unwrap());
        t.x.push(x);
        t.y.push(y);
    }
    Ok(AttackReport { last, trajectories, solve: None })
}

/// Takes the last token as the final state of the last active agent, walks
/// its primal states backwards with `x = 2x' - NΔ - z^k`, then rebuilds its
/// duals forwards from `y^0 = ρ x^0`.
///
/// Only the last active agent is estimated.
pub fn terminal_backward_attack(transcript: &Transcript) -> Result<AttackReport, AttackError> {
    let last = transcript.horizon().checked_sub(1).ok_or(AttackError::EmptyTranscript)?;
    let mut starts = epoch_starts(transcript, last)?;
    let agent = transcript.active(last);
    let starts = core::mem::take(&mut starts[agent]);
    let n = transcript.n_agents as f64;
    let rho = transcript.rho;
    let p = transcript.dim;

    let updates: Vec<usize> = starts[1..].iter().map(|s| s - 1).collect();
    let mut x = vec![Vec::new(); starts.len()];
    x[updates.len()] = transcript.token(last + 1).to_vec();
    for (j, &k) in updates.iter().enumerate().rev() {
        let z = transcript.token(k);
        let z_next = transcript.token(k + 1);
        x[j] = (0..p).map(|c| 2.0 * x[j + 1][c] - n * (z_next[c] - z[c]) - z[c]).collect();
    }
    let mut y = Vec::with_capacity(starts.len());
    y.push(x[0].iter().map(|v| rho * v).collect::<Vec<f64>>());
    for (j, &k) in updates.iter().enumerate() {
        let (_, next) = forward(transcript, k, &x[j], &y[j]);
        y.push(next);
    }
    Ok(AttackReport { last, trajectories: vec![AgentTrajectory { agent, starts, x, y }], solve: None })
}
