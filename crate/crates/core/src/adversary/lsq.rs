//! Least-squares estimation when the initial states are secret.
//!
//! Unknowns are one `x` and one `y` per agent per epoch and coordinate; the
//! coordinates decouple, so each gets its own sparse system.

use alloc::vec;
use alloc::vec::Vec;

use super::{epoch_starts, AgentTrajectory, AttackError, AttackReport, SolveInfo};
use crate::solver::Variant;
use crate::sparse::{lsqr, SparseSystem};
use crate::transcript::Transcript;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LsOptions {
    /// Add `Σ_i y_i = 0` over every agent's last epoch.
    pub kkt_row: bool,
    /// Add `x_i = z` for every agent's last update, using the token it sent.
    pub pin_last_cycle: bool,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self { kkt_row: true, pin_last_cycle: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unknown {
    X { agent: usize, epoch: usize },
    Y { agent: usize, epoch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    Init,
    RecursionX,
    RecursionY,
    KktSum,
    ConvergencePin,
}

/// The adversary's linear model, one system per coordinate sharing the same
/// matrix and unknown layout.
#[derive(Debug, Clone)]
pub struct MeasurementSystem {
    pub systems: Vec<SparseSystem>,
    pub unknowns: Vec<Unknown>,
    pub row_tags: Vec<RowTag>,
    pub starts: Vec<Vec<usize>>,
    /// Column of `x_{i,0}` per agent; `y` sits right after each `x`.
    base: Vec<usize>,
    pub last: usize,
}

impl MeasurementSystem {
    pub fn x_col(&self, agent: usize, epoch: usize) -> usize {
        self.base[agent] + 2 * epoch
    }

    pub fn y_col(&self, agent: usize, epoch: usize) -> usize {
        self.base[agent] + 2 * epoch + 1
    }

    pub fn rows(&self) -> usize {
        self.row_tags.len()
    }

    pub fn cols(&self) -> usize {
        self.unknowns.len()
    }
}

struct Builder {
    rows_per_coord: Vec<Vec<(usize, f64)>>,
    rhs: Vec<Vec<f64>>,
    tags: Vec<RowTag>,
}

impl Builder {
    fn new(p: usize) -> Self {
        Self { rows_per_coord: Vec::new(), rhs: vec![Vec::new(); p], tags: Vec::new() }
    }

    fn row(&mut self, tag: RowTag, entries: &[(usize, f64)], rhs: impl Fn(usize) -> f64) {
        self.rows_per_coord.push(entries.to_vec());
        for (c, b) in self.rhs.iter_mut().enumerate() {
            b.push(rhs(c));
        }
        self.tags.push(tag);
    }

    fn finish(self, cols: usize) -> (Vec<SparseSystem>, Vec<RowTag>) {
        let systems = self
            .rhs
            .into_iter()
            .map(|rhs| {
                let mut s = SparseSystem::new(self.tags.len(), cols);
                for (r, entries) in self.rows_per_coord.iter().enumerate() {
                    for &(col, v) in entries {
                        s.push(r, col, v);
                    }
                    s.set_rhs(r, rhs[r]);
                }
                s
            })
            .collect();
        (systems, self.tags)
    }
}

fn init_rows(b: &mut Builder, variant: Variant, x: usize, y: usize, rho: f64) {
    if variant.random_init() {
        b.row(RowTag::Init, &[(x, 1.0), (y, -1.0 / rho)], |_| 0.0);
    } else {
        b.row(RowTag::Init, &[(x, 1.0)], |_| 0.0);
        b.row(RowTag::Init, &[(y, 1.0)], |_| 0.0);
    }
}

/// The two rows of one update at iteration `k`, assuming unit step-size
/// multipliers and no primal noise.
fn recursion_rows(b: &mut Builder, t: &Transcript, k: usize, cols: [usize; 4]) {
    let [x0, y0, x1, y1] = cols;
    let n = t.n_agents as f64;
    let rho = t.rho;
    let z = t.token(k).to_vec();
    let z1 = t.token(k + 1).to_vec();
    b.row(RowTag::RecursionX, &[(x1, 1.0), (x0, -0.5)], |c| 0.5 * (n * (z1[c] - z[c]) + z[c]));
    b.row(RowTag::RecursionY, &[(y1, 1.0), (y0, -1.0), (x0, 0.5 * rho)], |c| {
        0.5 * rho * (z[c] - n * (z1[c] - z[c]))
    });
}

/// Builds the measurement system over iterations `0..=last`.
pub fn build_ls_system(
    transcript: &Transcript,
    variant: Variant,
    last: usize,
    options: LsOptions,
) -> Result<MeasurementSystem, AttackError> {
    let starts = epoch_starts(transcript, last)?;
    let n = transcript.n_agents;
    if options.pin_last_cycle {
        if let Some(agent) = starts.iter().position(|s| s.len() < 2) {
            return Err(AttackError::NeverActivated(agent));
        }
    }
    let mut base = Vec::with_capacity(n);
    let mut unknowns = Vec::new();
    for (agent, s) in starts.iter().enumerate() {
        base.push(unknowns.len());
        for epoch in 0..s.len() {
            unknowns.push(Unknown::X { agent, epoch });
            unknowns.push(Unknown::Y { agent, epoch });
        }
    }
    let x_col = |a: usize, e: usize| base[a] + 2 * e;

    let mut b = Builder::new(transcript.dim);
    for agent in 0..n {
        init_rows(&mut b, variant, x_col(agent, 0), x_col(agent, 0) + 1, transcript.rho);
    }
    let mut epoch = vec![0usize; n];
    for k in 0..=last {
        let a = transcript.active(k);
        let e = epoch[a];
        recursion_rows(&mut b, transcript, k, [x_col(a, e), x_col(a, e) + 1, x_col(a, e + 1), x_col(a, e + 1) + 1]);
        epoch[a] += 1;
    }
    if options.kkt_row {
        let entries: Vec<(usize, f64)> = (0..n).map(|a| (x_col(a, epoch[a]) + 1, 1.0)).collect();
        b.row(RowTag::KktSum, &entries, |_| 0.0);
    }
    if options.pin_last_cycle {
        for a in 0..n {
            let sent = transcript.token(*starts[a].last().unwrap()).to_vec();
            b.row(RowTag::ConvergencePin, &[(x_col(a, epoch[a]), 1.0)], |c| sent[c]);
        }
    }
    let (systems, row_tags) = b.finish(unknowns.len());
    Ok(MeasurementSystem { systems, unknowns, row_tags, starts, base, last })
}

fn solve_all(
    systems: &[SparseSystem],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<Vec<f64>>, SolveInfo), AttackError> {
    let mut solutions = Vec::with_capacity(systems.len());
    let mut info = SolveInfo {
        rows: systems.first().map_or(0, SparseSystem::rows),
        cols: systems.first().map_or(0, SparseSystem::cols),
        residual_norm: 0.0,
        iterations: 0,
        converged: true,
    };
    for s in systems {
        let sol = lsqr(s, tol, max_iter)?;
        info.residual_norm = info.residual_norm.max(sol.residual_norm);
        info.iterations = info.iterations.max(sol.iterations);
        info.converged &= sol.converged;
        solutions.push(sol.solution);
    }
    Ok((solutions, info))
}

/// Solves the measurement system coordinate by coordinate with LSQR and
/// returns estimates for every agent.
pub fn lsq_attack(
    transcript: &Transcript,
    variant: Variant,
    last: usize,
    options: LsOptions,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<AttackReport, AttackError> {
    let system = build_ls_system(transcript, variant, last, options)?;
    let max_iter = max_iter.unwrap_or_else(|| crate::sparse::default_lsqr_iterations(&system.systems[0]));
    let (solutions, info) = solve_all(&system.systems, tol, max_iter)?;
    let trajectories = system
        .starts
        .iter()
        .enumerate()
        .map(|(agent, starts)| {
            let pick = |col: fn(&MeasurementSystem, usize, usize) -> usize| -> Vec<Vec<f64>> {
                (0..starts.len()).map(|e| solutions.iter().map(|s| s[col(&system, agent, e)]).collect()).collect()
            };
            AgentTrajectory {
                agent,
                starts: starts.clone(),
                x: pick(MeasurementSystem::x_col),
                y: pick(MeasurementSystem::y_col),
            }
        })
        .collect();
    Ok(AttackReport { last, trajectories, solve: Some(info) })
}

/// Equation and unknown counts per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    /// What [`build_ls_system`] produces with the given options.
    pub implemented: (usize, usize),
    /// The count printed alongside the privacy analysis, where step-size
    /// multipliers (or primal noise) are counted as unknowns. Options are
    /// not included.
    pub published: (usize, usize),
}

/// Counts for a transcript covering iterations `0..=last` of `n` agents.
pub fn count_equations_unknowns(variant: Variant, last: usize, n: usize, options: LsOptions) -> Counts {
    let k = last;
    let states = 2 * k + 2 * n + 2;
    let recursion = 2 * k + 2;
    let extra = usize::from(options.kkt_row) + if options.pin_last_cycle { n } else { 0 };
    let init = if variant.random_init() { n } else { 2 * n };
    let implemented = (recursion + init + extra, states);
    let published = match variant {
        Variant::Iadmm | Variant::WadmmBaseline => (recursion + 2 * n, states),
        Variant::IadmmRandInit => (2 * k + 3, states),
        Variant::PiAdmm1 | Variant::PiAdmm2 => (2 * k + n + 2, 3 * k + 2 * n + 3),
    };
    Counts { implemented, published }
}

/// Counts for the colluding attack on agent 0 under the cyclic order, with
/// one unknown multiplier per update: `(2⌊K/N⌋ + 3, 3⌊K/N⌋ + 5)`.
pub fn count_colluding(last: usize, n: usize) -> (usize, usize) {
    let cycles = last / n;
    (2 * cycles + 3, 3 * cycles + 5)
}

/// All agents but `target` pool their states. Besides the target's init and
/// update rows they contribute the final dual balance
/// `y_target = -Σ_{j≠target} y_j` and the pin `x_target = z` at its last
/// update. `others_dual_sum` is `Σ_{j≠target} y_j` after iteration `last`.
///
/// Only the target's columns exist; [`MeasurementSystem::x_col`] is valid
/// for the target alone.
pub fn build_colluding_system(
    transcript: &Transcript,
    variant: Variant,
    target: usize,
    last: usize,
    others_dual_sum: &[f64],
) -> Result<MeasurementSystem, AttackError> {
    let n = transcript.n_agents;
    if target >= n {
        return Err(AttackError::InvalidTarget { target, n });
    }
    if others_dual_sum.len() != transcript.dim {
        return Err(AttackError::DualDimension { expected: transcript.dim, got: others_dual_sum.len() });
    }
    let starts = epoch_starts(transcript, last)?;
    let own = &starts[target];
    let epochs = own.len();
    if epochs < 2 {
        return Err(AttackError::NeverActivated(target));
    }
    let cols = 2 * epochs;
    let mut b = Builder::new(transcript.dim);
    init_rows(&mut b, variant, 0, 1, transcript.rho);
    for (e, &s) in own[1..].iter().enumerate() {
        recursion_rows(&mut b, transcript, s - 1, [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]);
    }
    b.row(RowTag::KktSum, &[(cols - 1, 1.0)], |c| -others_dual_sum[c]);
    let sent = transcript.token(*own.last().unwrap()).to_vec();
    b.row(RowTag::ConvergencePin, &[(cols - 2, 1.0)], |c| sent[c]);
    let (systems, row_tags) = b.finish(cols);
    let unknowns = (0..epochs)
        .flat_map(|epoch| [Unknown::X { agent: target, epoch }, Unknown::Y { agent: target, epoch }])
        .collect();
    Ok(MeasurementSystem { systems, unknowns, row_tags, starts, base: vec![0; n], last })
}

/// Least-squares estimates of the target's states from
/// [`build_colluding_system`].
pub fn colluding_attack(
    transcript: &Transcript,
    variant: Variant,
    target: usize,
    last: usize,
    others_dual_sum: &[f64],
    tol: f64,
    max_iter: Option<usize>,
) -> Result<AttackReport, AttackError> {
    let system = build_colluding_system(transcript, variant, target, last, others_dual_sum)?;
    let max_iter = max_iter.unwrap_or_else(|| crate::sparse::default_lsqr_iterations(&system.systems[0]));
    let (solutions, info) = solve_all(&system.systems, tol, max_iter)?;
    let epochs = system.starts[target].len();
    let x = (0..epochs).map(|e| solutions.iter().map(|s| s[2 * e]).collect()).collect();
    let y = (0..epochs).map(|e| solutions.iter().map(|s| s[2 * e + 1]).collect()).collect();
    let starts = system.starts[target].clone();
    Ok(AttackReport { last, trajectories: vec![AgentTrajectory { agent: target, starts, x, y }], solve: Some(info) })
}
