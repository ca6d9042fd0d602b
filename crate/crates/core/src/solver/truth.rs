//! Simulator-side record of every agent's states, used only to score attacks.

use alloc::vec;
use alloc::vec::Vec;

use super::AgentState;

/// States of the active agent right after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub k: usize,
    pub agent: usize,
    pub state: AgentState,
    pub gamma: Option<f64>,
    pub omega: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub initial: Vec<AgentState>,
    pub activations: Vec<Activation>,
    per_agent: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn new(initial: Vec<AgentState>) -> Self {
        let per_agent = vec![Vec::new(); initial.len()];
        Self { initial, activations: Vec::new(), per_agent }
    }

    pub fn push(&mut self, activation: Activation) {
        self.per_agent[activation.agent].push(self.activations.len());
        self.activations.push(activation);
    }

    pub fn n_agents(&self) -> usize {
        self.initial.len()
    }

    /// Iterations at which `agent` was active.
    pub fn activation_iterations(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        self.per_agent[agent].iter().map(|&i| self.activations[i].k)
    }

    /// `agent`'s states by epoch: entry 0 is the initial state, entry `e`
    /// the state after its `e`-th activation.
    pub fn epochs(&self, agent: usize) -> Vec<&AgentState> {
        core::iter::once(&self.initial[agent])
            .chain(self.per_agent[agent].iter().map(|&i| &self.activations[i].state))
            .collect()
    }

    /// `(x_i^k, y_i^k)`: the state held at the start of iteration `k`.
    pub fn state_at(&self, agent: usize, k: usize) -> &AgentState {
        let list = &self.per_agent[agent];
        let done = list.partition_point(|&i| self.activations[i].k < k);
        if done == 0 {
            &self.initial[agent]
        } else {
            &self.activations[list[done - 1]].state
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_lookup_respects_freezes() {
        let s = |v: f64| AgentState { x: vec![v], y: vec![-v] };
        let mut t = GroundTruth::new(vec![s(0.0), s(10.0)]);
        t.push(Activation { k: 0, agent: 0, state: s(1.0), gamma: None, omega: None });
        t.push(Activation { k: 1, agent: 1, state: s(11.0), gamma: None, omega: None });
        t.push(Activation { k: 2, agent: 0, state: s(2.0), gamma: None, omega: None });
        assert_eq!(t.state_at(0, 0).x, vec![0.0]);
        assert_eq!(t.state_at(0, 1).x, vec![1.0]);
        assert_eq!(t.state_at(0, 2).x, vec![1.0]);
        assert_eq!(t.state_at(0, 3).x, vec![2.0]);
        assert_eq!(t.state_at(1, 1).x, vec![10.0]);
        assert_eq!(t.epochs(0).len(), 3);
        assert_eq!(t.activation_iterations(0).collect::<Vec<_>>(), vec![0, 2]);
    }
}
