//! Progress and optimality measures over a snapshot of agent states.

use alloc::vec;
use alloc::vec::Vec;

use super::AgentState;
use crate::linalg::{axpy, dist, dot, norm};
use crate::objectives::LocalObjective;

/// Mean relative distance to the optimum. Agents that started exactly at the
/// optimum have no scale and are left out; `excluded` counts them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub value: f64,
    pub excluded: usize,
}

/// `(1/N) Σ_i ||x_i - x*|| / ||x_i^0 - x*||`
pub fn accuracy(states: &[AgentState], optimum: &[f64], initial: &[Vec<f64>]) -> Accuracy {
    let mut total = 0.0;
    let mut used = 0usize;
    for (s, x0) in states.iter().zip(initial) {
        let scale = dist(x0, optimum);
        if scale == 0.0 {
            continue;
        }
        total += dist(&s.x, optimum) / scale;
        used += 1;
    }
    let value = if used == 0 { 0.0 } else { total / used as f64 };
    Accuracy { value, excluded: states.len() - used }
}

/// `Σ_i [f_i(x_i) + <y_i, z - x_i> + (ρ/2) ||z - x_i||²]`
pub fn aug_lagrangian<O: LocalObjective>(objectives: &[O], states: &[AgentState], z: &[f64], rho: f64) -> f64 {
    let values: f64 = objectives.iter().zip(states).map(|(f, s)| f.value(&s.x)).sum();
    values + coupling(states, z, rho)
}

/// The multiplier and penalty part of the augmented Lagrangian.
pub fn coupling(states: &[AgentState], z: &[f64], rho: f64) -> f64 {
    let mut total = 0.0;
    let mut gap = vec![0.0; z.len()];
    for s in states {
        for ((g, zi), xi) in gap.iter_mut().zip(z).zip(&s.x) {
            *g = zi - xi;
        }
        total += dot(&s.y, &gap) + 0.5 * rho * dot(&gap, &gap);
    }
    total
}

/// Residuals of the optimality system.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `max_i ||∇f_i(x_i) - y_i||`
    pub gradient: f64,
    /// `||Σ_i y_i||`
    pub dual_sum: f64,
    /// `max_i ||z - x_i||`
    pub consensus: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.dual_sum).max(self.consensus)
    }
}

pub fn kkt_residuals<O: LocalObjective>(objectives: &[O], states: &[AgentState], z: &[f64]) -> KktResiduals {
    let gradient = objectives.iter().zip(states).map(|(f, s)| dist(&f.gradient(&s.x), &s.y)).fold(0.0, f64::max);
    KktResiduals { gradient, dual_sum: dual_sum_norm(states), consensus: primal_residual(states, z) }
}

pub fn dual_sum_norm(states: &[AgentState]) -> f64 {
    let mut sum = vec![0.0; states.first().map_or(0, |s| s.y.len())];
    for s in states {
        axpy(1.0, &s.y, &mut sum);
    }
    norm(&sum)
}

/// `max_i ||z - x_i||`
pub fn primal_residual(states: &[AgentState], z: &[f64]) -> f64 {
    states.iter().map(|s| dist(z, &s.x)).fold(0.0, f64::max)
}

/// `||z - (1/N) Σ_i (x_i - y_i/ρ)||`
pub fn token_gap(states: &[AgentState], z: &[f64], rho: f64) -> f64 {
    let mut avg = vec![0.0; z.len()];
    for s in states {
        for c in 0..z.len() {
            avg[c] += s.x[c] - s.y[c] / rho;
        }
    }
    let inv_n = 1.0 / states.len() as f64;
    avg.iter_mut().for_each(|a| *a *= inv_n);
    dist(z, &avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Dataset, Ridge};

    fn states(xs: &[[f64; 2]]) -> Vec<AgentState> {
        xs.iter().map(|x| AgentState { x: x.to_vec(), y: vec![0.0, 0.0] }).collect()
    }

    #[test]
    fn accuracy_endpoints() {
        let opt = [1.0, 1.0];
        let init = vec![vec![0.0, 0.0], vec![3.0, 1.0]];
        let at_opt = states(&[[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(accuracy(&at_opt, &opt, &init), Accuracy { value: 0.0, excluded: 0 });
        let at_start = states(&[[0.0, 0.0], [3.0, 1.0]]);
        assert_eq!(accuracy(&at_start, &opt, &init).value, 1.0);
    }

    #[test]
    fn accuracy_skips_agents_starting_at_optimum() {
        let opt = [0.0, 0.0];
        let init = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let a = accuracy(&states(&[[5.0, 0.0], [1.0, 0.0]]), &opt, &init);
        assert_eq!(a, Accuracy { value: 0.5, excluded: 1 });
    }

    #[test]
    fn lagrangian_by_hand() {
        let f = vec![Ridge::new(Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap())];
        let s = vec![AgentState { x: vec![0.0, 0.0], y: vec![1.0, 2.0] }];
        // f(0) = 1, <y, z> = 1, (ρ/2)||z||² = 1.5
        assert_eq!(aug_lagrangian(&f, &s, &[1.0, 0.0], 3.0), 3.5);
    }

    #[test]
    fn kkt_at_consensus() {
        let f = vec![Ridge::new(Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap())];
        let s = vec![AgentState { x: vec![1.0, 0.0], y: vec![0.0, 0.0] }];
        let r = kkt_residuals(&f, &s, &[1.0, 0.0]);
        assert_eq!(r, KktResiduals::default());
        assert_eq!(kkt_residuals(&f, &s, &[1.0, 2.0]).consensus, 2.0);
    }

    #[test]
    fn token_gap_zero_for_matching_average() {
        let s = vec![AgentState { x: vec![2.0], y: vec![2.0] }, AgentState { x: vec![0.0], y: vec![-4.0] }];
        // (2 - 1 + 0 + 2) / 2 = 1.5
        assert_eq!(token_gap(&s, &[1.5], 2.0), 0.0);
    }
}
