//! Incremental ADMM over a token-passing ring.
//!
//! Agents on a connected graph cooperatively minimise `Σ_i f_i(x)`. A single
//! token `z` walks a Hamiltonian cycle; the agent holding it performs one
//! primal/dual update and forwards the refreshed token to its successor. The
//! crate also carries the privacy-preserving variants (random initialisation,
//! step-size perturbation, primal perturbation), a random-walk baseline, and
//! the passive attacks an eavesdropper can mount from the token transcript.
//!
//! The crate is `no_std` and only needs `alloc`. All randomness flows from
//! explicit 64-bit seeds.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adversary;
pub mod linalg;
pub mod objectives;
pub mod solver;
pub mod sparse;
pub mod topology;
pub mod transcript;

pub use adversary::{AttackError, AttackReport};
pub use linalg::{DenseMatrix, LinalgError};
pub use objectives::{Dataset, LocalObjective, Logistic, ObjectiveError, Ridge};
pub use solver::{RunOutput, SolverConfig, SolverError, Variant};
pub use sparse::{lsqr, LsqrSolution, SparseSystem};
pub use topology::{ActivationSchedule, Graph, TopologyError};
pub use transcript::Transcript;
