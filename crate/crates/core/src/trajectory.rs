//! Shared trajectory scaffolding: sampling plans, event records, and
//! per-trajectory results common to the jump and diffusion unravelings.

use crate::error::{CoreError, Result};
use crate::observables::{observe_plain, SampleObservation, TwoLobeBasis};
use crate::state::WaveFunction;

/// When to sample observables along a trajectory, and with which lobe
/// structure.
#[derive(Debug, Clone)]
pub struct ObservablePlan {
    sample_times: Vec<f64>,
    basis: Option<TwoLobeBasis>,
}

impl ObservablePlan {
    /// Plan sampling at the given strictly increasing, non-negative times.
    pub fn new(sample_times: Vec<f64>) -> Result<Self> {
        if sample_times.is_empty() {
            return Err(CoreError::TooFewSamples { got: 0, need: 1 });
        }
        if sample_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(CoreError::NonFinite {
                what: "sample times",
            });
        }
        for pair in sample_times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(CoreError::InvalidParameter {
                    name: "sample_times",
                    reason: "must be strictly increasing",
                    value: pair[1],
                });
            }
        }
        Ok(Self {
            sample_times,
            basis: None,
        })
    }

    /// Attach a two-lobe basis so samples carry lobe masses and coherence.
    pub fn with_basis(mut self, basis: TwoLobeBasis) -> Self {
        self.basis = Some(basis);
        self
    }

    /// Sample times.
    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    /// Final sample time; trajectories run until here.
    pub fn t_final(&self) -> f64 {
        *self.sample_times.last().expect("plan is never empty")
    }

    /// Attached basis, if any.
    pub fn basis(&self) -> Option<&TwoLobeBasis> {
        self.basis.as_ref()
    }

    /// Observe a state at `time` according to the plan's lobe structure.
    pub fn observe(&self, state: &WaveFunction, time: f64) -> Result<SampleObservation> {
        match &self.basis {
            Some(basis) => basis.observe(state, time),
            None => Ok(observe_plain(state, time)),
        }
    }

    /// Classified outcome of a final state (0 = left, 1 = right) when a
    /// basis is attached.
    pub fn classify(&self, state: &WaveFunction) -> Result<Option<u8>> {
        match &self.basis {
            Some(basis) => Ok(Some(basis.classify(state)?)),
            None => Ok(None),
        }
    }
}

/// One localization jump along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Time at which the jump fired.
    pub time: f64,
    /// Sampled localization center.
    pub center: f64,
    /// Squared norm of the unnormalized post-jump state; equals the
    /// probability density of the sampled center times the kernel width
    /// normalization.
    pub weight: f64,
}

/// Running record of per-step norm corrections in a diffusive trajectory.
/// The signed sum tracks systematic drift of the pre-renormalization norm;
/// the absolute sum and maximum bound the worst-case correction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormMonitor {
    /// Sum of signed corrections (norm - 1) before renormalization.
    pub signed_sum: f64,
    /// Sum of |norm - 1| before renormalization.
    pub abs_sum: f64,
    /// Largest single-step |norm - 1|.
    pub max_step: f64,
    /// Number of steps recorded.
    pub steps: usize,
}

impl NormMonitor {
    /// Record one pre-renormalization norm deviation.
    pub fn record(&mut self, signed_correction: f64) {
        self.signed_sum += signed_correction;
        self.abs_sum += signed_correction.abs();
        self.max_step = self.max_step.max(signed_correction.abs());
        self.steps += 1;
    }

    /// Absorb another monitor (e.g. from a concatenated segment).
    pub fn merge(&mut self, other: &NormMonitor) {
        self.signed_sum += other.signed_sum;
        self.abs_sum += other.abs_sum;
        self.max_step = self.max_step.max(other.max_step);
        self.steps += other.steps;
    }
}

/// Full record of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    /// Normalized state at the final sample time.
    pub final_state: WaveFunction,
    /// Jumps that fired, in time order (empty for diffusive dynamics).
    pub jumps: Vec<JumpEvent>,
    /// Observations at the plan's sample times, in order.
    pub samples: Vec<SampleObservation>,
    /// Norm-correction record (zeroed for jump dynamics, whose evolution
    /// between jumps is exactly unitary).
    pub norm_monitor: NormMonitor,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LatticeGrid;
    use crate::state::make_gaussian_packet;

    #[test]
    fn plan_validates_times() {
        assert!(ObservablePlan::new(vec![]).is_err());
        assert!(ObservablePlan::new(vec![0.0, 0.0]).is_err());
        assert!(ObservablePlan::new(vec![-1.0, 1.0]).is_err());
        assert!(ObservablePlan::new(vec![0.0, f64::NAN]).is_err());
        let plan = ObservablePlan::new(vec![0.0, 0.5, 2.0]).unwrap();
        assert_eq!(plan.t_final(), 2.0);
        assert!(plan.basis().is_none());
    }

    #[test]
    fn plain_plan_observes_without_lobes() {
        let grid = LatticeGrid::new(128, 0.25, -16.0).unwrap();
        let psi = make_gaussian_packet(&grid, 0.0, 1.0, 0.0).unwrap();
        let plan = ObservablePlan::new(vec![1.0]).unwrap();
        let obs = plan.observe(&psi, 1.0).unwrap();
        assert!(obs.lobe_masses.is_none());
        assert!(obs.lobe_coherence.is_none());
        assert_eq!(plan.classify(&psi).unwrap(), None);
    }

    #[test]
    fn monitor_merges_like_concatenation() {
        let mut a = NormMonitor::default();
        a.record(1e-4);
        a.record(-2e-4);
        let mut b = NormMonitor::default();
        b.record(5e-5);
        let mut merged = a;
        merged.merge(&b);
        let mut direct = NormMonitor::default();
        for c in [1e-4, -2e-4, 5e-5] {
            direct.record(c);
        }
        assert_eq!(merged, direct);
        assert_eq!(merged.steps, 3);
        assert_eq!(merged.max_step, 2e-4);
    }
}
