//! Grid × seed sweeps, one independent run per point.

use rayon::prelude::*;

use iadmm_core::solver::{run, RunOptions, Termination, Variant};

use crate::config::ExperimentConfig;
use crate::experiment::{build, HarnessError};
use crate::formats::{csv_rows, float};

/// One grid point and seed offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub agents: usize,
    pub eta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub variant: Variant,
    pub seed: u64,
}

impl SweepPoint {
    /// The base config with this point's values and every seed shifted by
    /// the seed offset.
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.agents = self.agents;
        c.eta = self.eta;
        c.solver.rho = self.rho;
        c.solver.sigma = self.sigma;
        c.solver.variant = self.variant;
        c.seeds.graph += self.seed;
        c.seeds.data += self.seed;
        c.seeds.solver += self.seed;
        c.solver.seed = c.seeds.solver;
        if let Some(budget) = base.sweep.budget {
            c.solver.max_iters = budget;
        }
        c
    }
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the sweep axes, seeds innermost.
pub fn grid(config: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &config.sweep;
    let mut points = Vec::new();
    for &variant in &axis(&s.variant, config.solver.variant) {
        for &agents in &axis(&s.agents, config.agents) {
            for &eta in &axis(&s.eta, config.eta) {
                for &rho in &axis(&s.rho, config.solver.rho) {
                    for &sigma in &axis(&s.sigma, config.solver.sigma) {
                        for seed in 0..s.seeds as u64 {
                            points.push(SweepPoint { agents, eta, rho, sigma, variant, seed });
                        }
                    }
                }
            }
        }
    }
    points
}

/// One checkpoint of one run, or a single error row for a failed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub k: Option<usize>,
    pub comm_units: Option<usize>,
    pub accuracy: Option<f64>,
    pub primal_residual: Option<f64>,
    pub status: String,
}

fn run_point(base: &ExperimentConfig, point: &SweepPoint) -> Vec<SweepRow> {
    let outcome = (|| -> Result<_, HarnessError> {
        let config = point.apply(base);
        let experiment = build(&config)?;
        let options = RunOptions {
            record_every: Some(config.record_every()),
            keep_transcript: false,
            keep_truth: false,
            ..RunOptions::default()
        };
        Ok(run(&experiment.problem, &experiment.graph, &config.solver, &options)?)
    })();
    match outcome {
        Ok(out) => {
            let status = match out.trace.summary.termination {
                Termination::Converged => "converged".to_string(),
                Termination::MaxIters => "max_iters".to_string(),
                Termination::Diverged { k } => format!("diverged at {k}"),
            };
            out.trace
                .records
                .iter()
                .map(|r| SweepRow {
                    point: point.clone(),
                    k: Some(r.k),
                    comm_units: Some(r.comm_units),
                    accuracy: Some(r.accuracy),
                    primal_residual: Some(r.primal_residual),
                    status: status.clone(),
                })
                .collect()
        }
        Err(e) => vec![SweepRow {
            point: point.clone(),
            k: None,
            comm_units: None,
            accuracy: None,
            primal_residual: None,
            status: format!("error: {e}"),
        }],
    }
}

/// Runs every grid point in parallel. Rows come back in grid order, so the
/// output does not depend on scheduling.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let points = grid(config);
    let rows: Vec<Vec<SweepRow>> = points.par_iter().map(|p| run_point(config, p)).collect();
    Ok(rows.into_iter().flatten().collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>, HarnessError> {
    let header = [
        "variant", "agents", "eta", "rho", "sigma", "seed", "k", "comm_units", "accuracy", "r_primal", "status",
    ];
    let opt = |v: Option<String>| v.unwrap_or_default();
    csv_rows(
        &header,
        rows.iter().map(|r| {
            vec![
                r.point.variant.name().to_string(),
                r.point.agents.to_string(),
                float(r.point.eta),
                float(r.point.rho),
                float(r.point.sigma),
                r.point.seed.to_string(),
                opt(r.k.map(|v| v.to_string())),
                opt(r.comm_units.map(|v| v.to_string())),
                opt(r.accuracy.map(float)),
                opt(r.primal_residual.map(float)),
                r.status.clone(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        "problem.agents = 5\ngraph.eta = 1\nsolver.max_iters = 50\nsweep.rho = 1,10\nsweep.variant = iadmm,wadmm_baseline\nsweep.seeds = 2\n"
            .parse()
            .unwrap()
    }

    #[test]
    fn grid_is_a_full_product() {
        let points = grid(&base());
        assert_eq!(points.len(), 2 * 2 * 2);
        assert_eq!(points[0].seed, 0);
        assert_eq!(points[1].seed, 1);
        assert_eq!(points[0].agents, 5);
    }

    #[test]
    fn failures_stay_in_their_row() {
        let mut c = base();
        c.sweep.agents = vec![5, 2];
        let rows = sweep(&c).unwrap();
        let failed: Vec<_> = rows.iter().filter(|r| r.status.starts_with("error")).collect();
        assert_eq!(failed.len(), 8);
        assert!(failed.iter().all(|r| r.point.agents == 2 && r.k.is_none()));
        assert!(rows.iter().any(|r| r.point.agents == 5 && r.accuracy.is_some()));
    }

    #[test]
    fn sweeps_are_reproducible() {
        let c = base();
        assert_eq!(sweep_csv(&sweep(&c).unwrap()).unwrap(), sweep_csv(&sweep(&c).unwrap()).unwrap());
    }

    #[test]
    fn budget_caps_iterations() {
        let mut c = base();
        c.sweep.budget = Some(7);
        let rows = sweep(&c).unwrap();
        assert!(rows.iter().all(|r| r.comm_units.unwrap() <= 7));
    }
}
