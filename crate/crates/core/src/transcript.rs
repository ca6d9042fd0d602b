//! What a passive eavesdropper sees: every token transmission, in order.

use alloc::vec::Vec;

/// One token send: agent `sender` finished iteration `k` and forwarded
/// `z^{k+1}` to `receiver`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub k: usize,
    pub sender: usize,
    pub receiver: usize,
    pub token: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranscriptError {
    #[error("observation {position} has iteration index {got}")]
    NonContiguous { position: usize, got: usize },
    #[error("observation {k} carries {got} coordinates, expected {expected}")]
    TokenDimension { k: usize, expected: usize, got: usize },
    #[error("observation {k} names agent {agent} outside 0..{n}")]
    UnknownAgent { k: usize, agent: usize, n: usize },
    #[error("observation {k} is sent by {sender} but the previous token went to {expected}")]
    BrokenChain { k: usize, sender: usize, expected: usize },
}

/// The ordered log of token values. `rho` and `n_agents` are public
/// protocol parameters the adversary is assumed to know.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub n_agents: usize,
    pub rho: f64,
    pub dim: usize,
    /// `z^0`, fixed by the protocol.
    pub initial_token: Vec<f64>,
    pub observations: Vec<Observation>,
}

impl Transcript {
    pub fn new(n_agents: usize, rho: f64, initial_token: Vec<f64>) -> Self {
        Self { n_agents, rho, dim: initial_token.len(), initial_token, observations: Vec::new() }
    }

    /// Number of observed iterations; tokens `z^0 ..= z^horizon` are known.
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    /// `z^k` for `k ≤ horizon`.
    pub fn token(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.initial_token
        } else {
            &self.observations[k - 1].token
        }
    }

    /// `z^k - z^{k-1}` for `1 ≤ k ≤ horizon`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        crate::linalg::sub(self.token(k), self.token(k - 1))
    }

    /// Agent that updated during iteration `k`.
    pub fn active(&self, k: usize) -> usize {
        self.observations[k].sender
    }

    /// The first `iterations` observations.
    pub fn truncated(&self, iterations: usize) -> Self {
        let mut t = self.clone();
        t.observations.truncate(iterations);
        t
    }

    pub fn validate(&self) -> Result<(), TranscriptError> {
        let n = self.n_agents;
        for (position, obs) in self.observations.iter().enumerate() {
            if obs.k != position {
                return Err(TranscriptError::NonContiguous { position, got: obs.k });
            }
            if obs.token.len() != self.dim {
                return Err(TranscriptError::TokenDimension { k: obs.k, expected: self.dim, got: obs.token.len() });
            }
            for agent in [obs.sender, obs.receiver] {
                if agent >= n {
                    return Err(TranscriptError::UnknownAgent { k: obs.k, agent, n });
                }
            }
            if position > 0 {
                let expected = self.observations[position - 1].receiver;
                if obs.sender != expected {
                    return Err(TranscriptError::BrokenChain { k: obs.k, sender: obs.sender, expected });
                }
            }
        }
        Ok(())
    }
}
