//! Single-activation building blocks: initialisation and the x, y, z updates.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GammaDist, InitDist, SolverError, Variant, XUpdateMode};
use crate::objectives::{LocalObjective, ObjectiveError};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AgentState {
    pub fn zeros(p: usize) -> Self {
        Self { x: vec![0.0; p], y: vec![0.0; p] }
    }
}

/// The circulating token `z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub z: Vec<f64>,
    pub k: usize,
}

/// Zero states for the deterministic variants. The randomized ones draw
/// `υ_i` per coordinate and set `y_i = ρ υ_i`, `x_i = y_i / ρ`, so every
/// `x_i - y_i/ρ` vanishes exactly and `z^0 = 0` is the true average.
pub fn initialize(
    variant: Variant,
    n: usize,
    p: usize,
    rho: f64,
    init: InitDist,
    rng: &mut ChaCha8Rng,
) -> (Vec<AgentState>, Token) {
    let token = Token { z: vec![0.0; p], k: 0 };
    if !variant.random_init() {
        return (vec![AgentState::zeros(p); n], token);
    }
    let states = (0..n)
        .map(|_| {
            let y: Vec<f64> = (0..p).map(|_| rho * init.sample(rng)).collect();
            let x = y.iter().map(|v| v / rho).collect();
            AgentState { x, y }
        })
        .collect();
    (states, token)
}

/// New primal iterate for the active agent under penalty `rho_t`.
pub fn x_update<O: LocalObjective + ?Sized>(
    objective: &O,
    state: &AgentState,
    z: &[f64],
    rho_t: f64,
    mode: XUpdateMode,
) -> Result<Vec<f64>, SolverError> {
    match mode {
        XUpdateMode::ExactProx => objective.prox(z, &state.y, rho_t).map_err(|e| match e {
            ObjectiveError::ProxUnsupported => SolverError::ProxUnsupported,
            other => SolverError::Objective(other),
        }),
        XUpdateMode::FirstOrder => {
            let g = objective.gradient(&state.x);
            Ok(z.iter().zip(&state.y).zip(&g).map(|((zi, yi), gi)| zi + yi / rho_t - gi / rho_t).collect())
        }
    }
}

/// `y + rho_t (z - x_new)`
pub fn y_update(y: &[f64], z: &[f64], x_new: &[f64], rho_t: f64) -> Vec<f64> {
    y.iter().zip(z).zip(x_new).map(|((yi, zi), xi)| yi + rho_t * (zi - xi)).collect()
}

/// `z + (1/N) [(x_new - y_new/ρ) - (x_old - y_old/ρ)]`, always with the
/// global penalty.
pub fn z_update_incremental(
    z: &[f64],
    old: &AgentState,
    new: &AgentState,
    rho: f64,
    n: usize,
) -> Vec<f64> {
    let inv_n = 1.0 / n as f64;
    (0..z.len())
        .map(|c| z[c] + inv_n * ((new.x[c] - new.y[c] / rho) - (old.x[c] - old.y[c] / rho)))
        .collect()
}

/// Smallest step-size multiplier the perturbed descent guarantee accepts:
/// `max{(2ρ² + 4ρ + 1)/(ρ - L), 2(ρ + 2)N}`.
pub fn gamma_lower_bound(rho: f64, lipschitz: f64, n: usize) -> Result<f64, SolverError> {
    if !(rho > lipschitz) {
        return Err(SolverError::GammaBoundUndefined { rho, lipschitz });
    }
    let curvature = (2.0 * rho * rho + 4.0 * rho + 1.0) / (rho - lipschitz);
    let network = 2.0 * (rho + 2.0) * n as f64;
    Ok(curvature.max(network))
}

/// Draws one multiplier. Constant distributions consume no randomness.
pub fn sample_gamma(dist: GammaDist, rng: &mut ChaCha8Rng) -> Result<f64, SolverError> {
    match dist {
        GammaDist::Constant(c) if c > 0.0 => Ok(c),
        GammaDist::Uniform { lo, hi } if lo > 0.0 && hi >= lo => {
            Ok(if hi > lo { rng.random_range(lo..hi) } else { lo })
        }
        GammaDist::StepFloor { .. } => Err(SolverError::UnresolvedGamma),
        other => Err(SolverError::InvalidGamma(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Dataset, Ridge};
    use rand::SeedableRng;

    fn zero_ridge() -> Ridge {
        Ridge::new(Dataset::new(vec![vec![0.0, 0.0]], vec![0.0]).unwrap())
    }

    #[test]
    fn deterministic_init_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (states, token) = initialize(Variant::Iadmm, 3, 2, 1.0, InitDist::default(), &mut rng);
        assert!(states.iter().all(|s| s == &AgentState::zeros(2)));
        assert_eq!(token.z, vec![0.0, 0.0]);
    }

    #[test]
    fn random_init_cancels_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = 3.7;
        let (states, _) = initialize(Variant::IadmmRandInit, 50, 3, rho, InitDist { lo: 0.0, hi: 100.0 }, &mut rng);
        for s in &states {
            for c in 0..3 {
                assert_eq!(s.x[c] - s.y[c] / rho, 0.0);
                assert!((0.0..=100.0).contains(&s.x[c]));
            }
        }
    }

    #[test]
    fn prox_of_zero_function() {
        let s = AgentState { x: vec![9.0, 9.0], y: vec![1.0, -2.0] };
        let x = x_update(&zero_ridge(), &s, &[0.5, 0.5], 2.0, XUpdateMode::ExactProx).unwrap();
        assert_eq!(x, vec![1.0, -0.5]);
    }

    #[test]
    fn first_order_stationary_pairing_returns_token() {
        let f = Ridge::new(Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap());
        let x = vec![0.3, 0.2];
        let s = AgentState { y: f.gradient(&x), x };
        let out = x_update(&f, &s, &[4.0, -1.0], 5.0, XUpdateMode::FirstOrder).unwrap();
        assert_eq!(out, vec![4.0, -1.0]);
    }

    #[test]
    fn single_sample_prox() {
        let f = Ridge::new(Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap());
        let x = x_update(&f, &AgentState::zeros(2), &[0.0, 0.0], 2.0, XUpdateMode::ExactProx).unwrap();
        assert_eq!(x, vec![0.5, 0.0]);
    }

    #[test]
    fn y_update_formula() {
        assert_eq!(y_update(&[1.0, 2.0], &[3.0, 3.0], &[3.0, 3.0], 9.0), vec![1.0, 2.0]);
        assert_eq!(y_update(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 2.0), vec![2.0, 0.0]);
    }

    #[test]
    fn z_update_edge_cases() {
        let s = AgentState { x: vec![1.0], y: vec![4.0] };
        assert_eq!(z_update_incremental(&[0.25], &s, &s, 2.0, 5), vec![0.25]);
        let new = AgentState { x: vec![3.0], y: vec![2.0] };
        let old = AgentState { x: vec![1.0], y: vec![2.0] };
        // one agent: z = x - y/ρ when the previous token matched the previous state
        assert_eq!(z_update_incremental(&[0.0], &old, &new, 2.0, 1), vec![2.0]);
    }

    #[test]
    fn step_floor_plug_in() {
        assert_eq!(gamma_lower_bound(2.0, 1.0, 1).unwrap(), 17.0);
        assert_eq!(gamma_lower_bound(2.0, 1.0, 10).unwrap(), 80.0);
        assert!(gamma_lower_bound(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn gamma_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_gamma(GammaDist::Constant(1.0), &mut rng).unwrap(), 1.0);
        for _ in 0..1000 {
            let g = sample_gamma(GammaDist::Uniform { lo: 0.9, hi: 1.1 }, &mut rng).unwrap();
            assert!(g > 0.9 - 1e-15 && g < 1.1);
        }
        assert!(sample_gamma(GammaDist::Uniform { lo: -0.1, hi: 1.1 }, &mut rng).is_err());
        assert!(sample_gamma(GammaDist::Constant(0.0), &mut rng).is_err());
    }
}
