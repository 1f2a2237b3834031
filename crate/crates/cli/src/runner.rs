//! Deterministic parallel ensemble execution.
//!
//! Trajectory k draws every random number from its own ChaCha8 stream keyed
//! by SHA-256(le64(master_seed) || le64(k)), so results are a pure function
//! of (config, master_seed): the worker count and thread scheduling affect
//! only wall-clock time, never output bytes.

use collapse_core::csl::run_csl_trajectory;
use collapse_core::grw::run_grw_trajectory;
use collapse_core::observables::{EnsembleAccumulator, EnsembleSummary, TrajectoryContribution};
use collapse_core::propagator::evolve_unitary;
use collapse_core::rng::trajectory_rng;
use collapse_core::trajectory::NormMonitor;
use collapse_core::{CollapseParams, CoreError, HamiltonianSpec, ObservablePlan, WaveFunction};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Model};

/// A run failure with the trajectory it occurred in, when applicable.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: CoreError,
    },
    #[error(transparent)]
    Setup(#[from] CoreError),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Compact per-trajectory record for the structured output tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    /// Classified outcome for cat runs: 0 = left, 1 = right.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<u8>,
    pub jump_count: usize,
    /// Sum of |norm correction| over all diffusion steps.
    pub norm_correction_abs_sum: f64,
    /// Largest single-step |norm correction|.
    pub norm_correction_max_step: f64,
    /// Position mean and variance at the final sample time.
    pub final_mean_x: f64,
    pub final_var_x: f64,
}

/// Ensemble statistics plus the per-trajectory records, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: EnsembleSummary,
    pub records: Vec<TrajectoryRecord>,
}

struct Experiment {
    initial: WaveFunction,
    hamiltonian: Option<HamiltonianSpec>,
    params: Option<CollapseParams>,
    plan: ObservablePlan,
    model: Model,
    hbar: f64,
    dt: f64,
    master_seed: u64,
}

impl Experiment {
    fn prepare(config: &ExperimentConfig) -> Result<Self, CoreError> {
        let grid = config.build_grid()?;
        Ok(Self {
            initial: config.build_initial_state(&grid)?,
            hamiltonian: config.build_hamiltonian(&grid)?,
            params: config.build_collapse_params()?,
            plan: config.build_plan(&grid)?,
            model: config.model,
            hbar: config.hbar,
            dt: config.dt,
            master_seed: config.master_seed,
        })
    }

    fn run_one(&self, index: u64) -> Result<(TrajectoryContribution, NormMonitor), CoreError> {
        let mut rng = trajectory_rng(self.master_seed, index);
        let result = match self.model {
            Model::Schrodinger => self.run_unitary()?,
            Model::Grw => run_grw_trajectory(
                &self.initial,
                self.params.as_ref().expect("validated"),
                self.hamiltonian.as_ref(),
                self.dt,
                &self.plan,
                &mut rng,
            )?,
            Model::Csl => run_csl_trajectory(
                &self.initial,
                self.params.as_ref().expect("validated"),
                self.hamiltonian.as_ref(),
                self.dt,
                &self.plan,
                &mut rng,
            )?,
        };
        let outcome = self.plan.classify(&result.final_state)?;
        Ok((
            TrajectoryContribution {
                index,
                samples: result.samples,
                outcome,
                jump_count: result.jumps.len(),
            },
            result.norm_monitor,
        ))
    }

    /// Noiseless reference dynamics: piecewise unitary evolution between
    /// sample times (identity when no Hamiltonian is configured).
    fn run_unitary(&self) -> Result<collapse_core::TrajectoryResult, CoreError> {
        let mut state = self.initial.normalized()?;
        let mut samples = Vec::with_capacity(self.plan.sample_times().len());
        let mut t_prev = 0.0;
        for &t in self.plan.sample_times() {
            let span = t - t_prev;
            if let Some(h) = &self.hamiltonian {
                if span > 0.0 {
                    state = evolve_unitary(&state, h, self.hbar, span, self.dt)?;
                }
            }
            samples.push(self.plan.observe(&state, t)?);
            t_prev = t;
        }
        Ok(collapse_core::TrajectoryResult {
            final_state: state,
            jumps: Vec::new(),
            samples,
            norm_monitor: NormMonitor::default(),
        })
    }
}

/// Runs the configured ensemble on `workers` threads (0 = one per core).
/// The output is byte-for-byte independent of `workers`.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<RunOutput, RunError> {
    let experiment = Experiment::prepare(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let rows: Vec<(TrajectoryContribution, NormMonitor)> = pool.install(|| {
        (0..config.n_trajectories as u64)
            .into_par_iter()
            .map(|k| {
                experiment
                    .run_one(k)
                    .map_err(|source| RunError::Trajectory { index: k, source })
            })
            .collect::<Result<Vec<_>, RunError>>()
    })?;

    let mut records = Vec::with_capacity(rows.len());
    let mut accumulator = EnsembleAccumulator::new(config.sample_times.clone())?;
    for (contribution, monitor) in rows {
        let last = contribution
            .samples
            .last()
            .expect("plan guarantees at least one sample");
        records.push(TrajectoryRecord {
            index: contribution.index,
            outcome: contribution.outcome,
            jump_count: contribution.jump_count,
            norm_correction_abs_sum: monitor.abs_sum,
            norm_correction_max_step: monitor.max_step,
            final_mean_x: last.mean_x,
            final_var_x: last.var_x,
        });
        accumulator.push(contribution)?;
    }
    let summary = accumulator.finalize()?;
    Ok(RunOutput { summary, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config;
    use approx::assert_abs_diff_eq;

    fn csl_config() -> ExperimentConfig {
        load_config(
            r#"
model = "csl"
master_seed = 11
n_trajectories = 6
t_final = 0.1
dt = 0.0002
sample_times = [0.0, 0.05, 0.1]

[grid]
n_sites = 64
dx = 0.5
x_min = -16.0

[initial_state]
kind = "cat"
centers = [-5.0, 5.0]
sigma = 1.0
weights = [1.0, 1.0]

[collapse]
lambda_rate = 1.0
r_c = 1.0
"#,
        )
        .unwrap()
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let config = csl_config();
        let serial = run_experiment(&config, 1).unwrap();
        let parallel = run_experiment(&config, 8).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn grw_with_zero_rate_equals_the_unitary_run() {
        let text = r#"
model = "grw"
master_seed = 3
n_trajectories = 1
t_final = 0.5
dt = 0.001
sample_times = [0.25, 0.5]

[grid]
n_sites = 64
dx = 0.25
x_min = -8.0

[initial_state]
kind = "gaussian"
center = 0.0
sigma = 1.0
momentum = 2.0

[hamiltonian]
kind = "free"

[collapse]
lambda_rate = 0.0
r_c = 1.0
"#;
        let grw = run_experiment(&load_config(text).unwrap(), 2).unwrap();
        let unitary_text = text
            .replace("model = \"grw\"", "model = \"schrodinger\"")
            .replace(
                "[collapse]\nlambda_rate = 0.0\nr_c = 1.0\n",
                "",
            );
        let unitary = run_experiment(&load_config(&unitary_text).unwrap(), 2).unwrap();
        assert_eq!(grw.summary.mean_jump_count, 0.0);
        for (a, b) in grw.summary.mean_x.iter().zip(&unitary.summary.mean_x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in grw
            .summary
            .mean_var_x
            .iter()
            .zip(&unitary.summary.mean_var_x)
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn trajectory_records_are_in_index_order() {
        let out = run_experiment(&csl_config(), 3).unwrap();
        let indices: Vec<u64> = out.records.iter().map(|r| r.index).collect();
        assert_eq!(indices, vec![0, 1, 2, 3, 4, 5]);
        assert!(out.records.iter().all(|r| r.outcome.is_some()));
    }
}
