//! Ensemble observables and statistical oracles.
//!
//! A spatial superposition of two well-separated wave packets is summarized by
//! a 2x2 density matrix in the basis of the two packet templates. Under the
//! collapse dynamics the ensemble-averaged off-diagonal element decays as
//! exp(-Gamma t) while the diagonal populations stay fixed, which is the
//! closed-form solution of the two-state dephasing master equation
//!
//!   d rho_LR / dt = -Gamma rho_LR,   d rho_LL / dt = d rho_RR / dt = 0.
//!
//! For the mass-density coupling with smearing kernel g (unit area, width
//! r_c), the dephasing rate between two point-like lobes a distance d apart
//! is
//!
//!   Gamma(d) = (gamma m^2 / m0^2) [ (g*g)(0) - (g*g)(d) ],
//!
//! where (g*g) is the autocorrelation of g, so (g*g)(0) = 1/(2 sqrt(pi) r_c)
//! and Gamma saturates at lambda (m/m0)^2 for d >> r_c. On a periodic
//! lattice the exact rate is the discrete sum
//!
//!   Gamma_lat = (gamma / 2 m0^2) sum_i (m g[a-i] - m g[b-i])^2 dx,
//!
//! which this module exposes alongside a brute-force calibration that fits
//! the decay rate of a simulated two-site ensemble and compares it against
//! the lattice formula.
//!
//! Ref: Breuer & Petruccione, The Theory of Open Quantum Systems, ch. 3-4.

use num_complex::Complex64;

use crate::csl::{CslStepper, SmearingKernel};
use crate::error::{CoreError, Result};
use crate::grid::LatticeGrid;
use crate::params::CollapseParams;
use crate::rng::trajectory_rng;
use crate::state::WaveFunction;

/// Maximum template overlap magnitude for a usable two-lobe basis.
pub const MAX_TEMPLATE_OVERLAP: f64 = 1e-3;

/// Chi-square acceptance threshold for the 1-dof Born-rule test (3 sigma).
pub const CHI_SQUARE_LIMIT: f64 = 9.0;

/// Minimum sample count for the Born-rule frequency test.
pub const MIN_BORN_SAMPLES: usize = 100;

/// Minimum usable points for a coherence decay fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Signal-to-error ratio below which a coherence point is discarded.
pub const MIN_SIGNAL_TO_ERROR: f64 = 10.0;

/// Snapshot of single-trajectory observables at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleObservation {
    /// Simulation time of the snapshot.
    pub time: f64,
    /// Position expectation value <x>.
    pub mean_x: f64,
    /// Position variance <x^2> - <x>^2.
    pub var_x: f64,
    /// Probability mass in the (left, right) half-lines, when a lobe
    /// boundary is defined for the run.
    pub lobe_masses: Option<(f64, f64)>,
    /// Template coherence <g_L|psi> conj(<g_R|psi>), when a two-lobe basis
    /// is defined for the run.
    pub lobe_coherence: Option<Complex64>,
}

/// Observe a state without any lobe structure.
pub fn observe_plain(state: &WaveFunction, time: f64) -> SampleObservation {
    SampleObservation {
        time,
        mean_x: state.mean_position(),
        var_x: state.position_variance(),
        lobe_masses: None,
        lobe_coherence: None,
    }
}

/// Orthonormal-to-tolerance pair of packet templates for a two-lobe
/// superposition, plus the spatial boundary separating the lobes.
#[derive(Debug, Clone)]
pub struct TwoLobeBasis {
    left: WaveFunction,
    right: WaveFunction,
    boundary: f64,
}

impl TwoLobeBasis {
    /// Build a basis from two normalized templates. Fails with
    /// `DegenerateLobes` if their overlap magnitude exceeds
    /// `MAX_TEMPLATE_OVERLAP`.
    pub fn new(left: WaveFunction, right: WaveFunction, boundary: f64) -> Result<Self> {
        if left.grid() != right.grid() {
            return Err(CoreError::GridMismatch);
        }
        if !boundary.is_finite() {
            return Err(CoreError::NonFinite {
                what: "lobe boundary",
            });
        }
        let left = left.normalized()?;
        let right = right.normalized()?;
        let overlap = left.inner(&right)?.norm();
        if overlap > MAX_TEMPLATE_OVERLAP {
            return Err(CoreError::DegenerateLobes { overlap });
        }
        Ok(Self {
            left,
            right,
            boundary,
        })
    }

    /// Basis of two k=0 Gaussian packets centered at `x_left` and `x_right`
    /// with common width `sigma`; the boundary is their midpoint.
    pub fn gaussian_pair(
        grid: &LatticeGrid,
        x_left: f64,
        x_right: f64,
        sigma: f64,
    ) -> Result<Self> {
        let left = crate::state::make_gaussian_packet(grid, x_left, sigma, 0.0)?;
        let right = crate::state::make_gaussian_packet(grid, x_right, sigma, 0.0)?;
        Self::new(left, right, 0.5 * (x_left + x_right))
    }

    /// Left template.
    pub fn left(&self) -> &WaveFunction {
        &self.left
    }

    /// Right template.
    pub fn right(&self) -> &WaveFunction {
        &self.right
    }

    /// Spatial boundary between the lobes.
    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    /// Template amplitudes (<g_L|psi>, <g_R|psi>).
    pub fn amplitudes(&self, state: &WaveFunction) -> Result<(Complex64, Complex64)> {
        Ok((self.left.inner(state)?, self.right.inner(state)?))
    }

    /// Coherence rho_LR = <g_L|psi> conj(<g_R|psi>).
    pub fn coherence(&self, state: &WaveFunction) -> Result<Complex64> {
        let (cl, cr) = self.amplitudes(state)?;
        Ok(cl * cr.conj())
    }

    /// Classify a state by majority mass: 0 for left of the boundary,
    /// 1 for right. Ties go left so the outcome is deterministic.
    pub fn classify(&self, state: &WaveFunction) -> Result<u8> {
        if state.grid() != self.left.grid() {
            return Err(CoreError::GridMismatch);
        }
        let (l, r) = state.lobe_masses(self.boundary);
        Ok(if l >= r { 0 } else { 1 })
    }

    /// Full observation of a state at the given time.
    pub fn observe(&self, state: &WaveFunction, time: f64) -> Result<SampleObservation> {
        Ok(SampleObservation {
            time,
            mean_x: state.mean_position(),
            var_x: state.position_variance(),
            lobe_masses: Some(state.lobe_masses(self.boundary)),
            lobe_coherence: Some(self.coherence(state)?),
        })
    }
}

/// 2x2 density matrix in a two-lobe template basis. Hermiticity is built in:
/// only the upper off-diagonal element is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLobeDensityMatrix {
    /// Left-left population.
    pub rho_ll: f64,
    /// Right-right population.
    pub rho_rr: f64,
    /// Left-right coherence; the right-left element is its conjugate.
    pub rho_lr: Complex64,
}

impl TwoLobeDensityMatrix {
    /// Matrix trace.
    pub fn trace(&self) -> f64 {
        self.rho_ll + self.rho_rr
    }

    /// Eigenvalues (larger first). For a Hermitian 2x2 matrix these are
    /// (tr +- sqrt((rho_ll - rho_rr)^2 + 4 |rho_lr|^2)) / 2.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.rho_ll + self.rho_rr);
        let gap = 0.5 * ((self.rho_ll - self.rho_rr).powi(2) + 4.0 * self.rho_lr.norm_sqr()).sqrt();
        (half_tr + gap, half_tr - gap)
    }

    /// Check positivity and trace bounds within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (hi, lo) = self.eigenvalues();
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "density matrix eigenvalues",
            });
        }
        if lo < -tol {
            return Err(CoreError::InvalidParameter {
                name: "density matrix",
                reason: "negative eigenvalue beyond tolerance",
                value: lo,
            });
        }
        if self.trace() > 1.0 + tol {
            return Err(CoreError::InvalidParameter {
                name: "density matrix",
                reason: "trace exceeds one beyond tolerance",
                value: self.trace(),
            });
        }
        Ok(())
    }

    /// Trace distance to another matrix: half the absolute-eigenvalue sum of
    /// the Hermitian difference.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let a = self.rho_ll - other.rho_ll;
        let b = self.rho_rr - other.rho_rr;
        let c = self.rho_lr - other.rho_lr;
        let half_tr = 0.5 * (a + b);
        let gap = 0.5 * ((a - b).powi(2) + 4.0 * c.norm_sqr()).sqrt();
        0.5 * ((half_tr + gap).abs() + (half_tr - gap).abs())
    }
}

/// Project a pure state onto a two-lobe basis.
pub fn reduce_to_two_lobes(
    state: &WaveFunction,
    basis: &TwoLobeBasis,
) -> Result<TwoLobeDensityMatrix> {
    let (cl, cr) = basis.amplitudes(state)?;
    Ok(TwoLobeDensityMatrix {
        rho_ll: cl.norm_sqr(),
        rho_rr: cr.norm_sqr(),
        rho_lr: cl * cr.conj(),
    })
}

/// Closed-form two-state dephasing evolution: populations are constant and
/// the coherence decays as exp(-rate * t).
pub fn dephasing_oracle_evolve(
    rho: &TwoLobeDensityMatrix,
    rate: f64,
    t: f64,
) -> TwoLobeDensityMatrix {
    TwoLobeDensityMatrix {
        rho_ll: rho.rho_ll,
        rho_rr: rho.rho_rr,
        rho_lr: rho.rho_lr * (-rate * t).exp(),
    }
}

/// Continuum dephasing rate between two point-like lobes separated by `d`:
/// Gamma(d) = (gamma m^2 / m0^2) (1 - exp(-d^2 / 4 r_c^2)) / (2 sqrt(pi) r_c).
pub fn decoherence_rate_continuum(params: &CollapseParams, d: f64) -> f64 {
    let r = params.r_c();
    let autocorr_zero = 1.0 / (2.0 * std::f64::consts::PI.sqrt() * r);
    let mass_ratio_sq = (params.mass() / params.m0()).powi(2);
    params.gamma() * mass_ratio_sq * autocorr_zero * (1.0 - (-d * d / (4.0 * r * r)).exp())
}

/// Exact lattice dephasing rate between two grid sites: the discrete sum
/// (gamma / 2 m0^2) sum_i (m g[a-i] - m g[b-i])^2 dx over the periodic
/// smearing kernel.
pub fn decoherence_rate_between_sites(
    kernel: &SmearingKernel,
    params: &CollapseParams,
    site_a: usize,
    site_b: usize,
) -> f64 {
    let n = kernel.grid().n_sites();
    let dx = kernel.grid().dx();
    let m = params.mass();
    let mut sum = 0.0;
    for i in 0..n {
        // Wrapped kernel lookups g[(a - i) mod n] with the kernel stored on
        // offsets 0..n.
        let ga = kernel.value(site_a.wrapping_sub(i).wrapping_add(n) % n);
        let gb = kernel.value(site_b.wrapping_sub(i).wrapping_add(n) % n);
        let diff = m * (ga - gb);
        sum += diff * diff;
    }
    params.gamma() / (2.0 * params.m0() * params.m0()) * sum * dx
}

/// Result of a least-squares exponential decay fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Fitted decay rate (positive for decaying signals).
    pub rate: f64,
    /// Fitted value at t = 0.
    pub amplitude: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    /// Number of points used.
    pub n_points: usize,
}

/// Fit values[i] ~ A exp(-rate * times[i]) by least squares on the
/// logarithms. All values must be positive and finite.
pub fn fit_exponential_decay(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(CoreError::EnsembleMismatch {
            what: "decay fit arrays have different lengths",
        });
    }
    if times.len() < 2 {
        return Err(CoreError::TooFewSamples {
            got: times.len(),
            need: 2,
        });
    }
    let mut logs = Vec::with_capacity(values.len());
    for (&t, &v) in times.iter().zip(values) {
        if !t.is_finite() || !v.is_finite() {
            return Err(CoreError::NonFinite {
                what: "decay fit input",
            });
        }
        if v <= 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "values",
                reason: "exponential fit requires positive values",
                value: v,
            });
        }
        logs.push(v.ln());
    }
    let n = times.len() as f64;
    let mean_t = times.iter().sum::<f64>() / n;
    let mean_y = logs.iter().sum::<f64>() / n;
    let mut s_tt = 0.0;
    let mut s_ty = 0.0;
    let mut s_yy = 0.0;
    for (&t, &y) in times.iter().zip(&logs) {
        s_tt += (t - mean_t) * (t - mean_t);
        s_ty += (t - mean_t) * (y - mean_y);
        s_yy += (y - mean_y) * (y - mean_y);
    }
    if s_tt <= 0.0 {
        return Err(CoreError::InvalidParameter {
            name: "times",
            reason: "decay fit requires at least two distinct times",
            value: s_tt,
        });
    }
    let slope = s_ty / s_tt;
    let intercept = mean_y - slope * mean_t;
    // A constant series is fit perfectly by a zero slope; report r^2 = 1
    // rather than 0/0.
    let r_squared = if s_yy <= 1e-300 {
        1.0
    } else {
        let ss_res = s_yy - slope * s_ty;
        1.0 - (ss_res / s_yy).max(0.0)
    };
    Ok(DecayFit {
        rate: -slope,
        amplitude: intercept.exp(),
        r_squared,
        n_points: times.len(),
    })
}

/// Fit a coherence decay, discarding points whose magnitude is not at least
/// `MIN_SIGNAL_TO_ERROR` times the standard error. Fails with
/// `InsufficientSignal` when fewer than `MIN_FIT_POINTS` usable points
/// survive.
pub fn coherence_decay_fit(times: &[f64], values: &[f64], stderrs: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() || times.len() != stderrs.len() {
        return Err(CoreError::EnsembleMismatch {
            what: "coherence fit arrays have different lengths",
        });
    }
    let mut kept_t = Vec::new();
    let mut kept_v = Vec::new();
    for i in 0..times.len() {
        if values[i] > 0.0 && values[i] > MIN_SIGNAL_TO_ERROR * stderrs[i] {
            kept_t.push(times[i]);
            kept_v.push(values[i]);
        }
    }
    if kept_t.len() < MIN_FIT_POINTS {
        return Err(CoreError::InsufficientSignal {
            usable: kept_t.len(),
            need: MIN_FIT_POINTS,
        });
    }
    fit_exponential_decay(&kept_t, &kept_v)
}

/// Two-cell chi-square test of observed outcome counts against expected
/// probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BornRuleTest {
    /// Chi-square statistic with one degree of freedom.
    pub chi_square: f64,
    /// Observed frequency of the first outcome.
    pub observed_frequency: f64,
    /// Expected probability of the first outcome.
    pub expected_probability: f64,
    /// Total sample count.
    pub n_samples: usize,
    /// Whether chi_square <= CHI_SQUARE_LIMIT.
    pub passed: bool,
}

/// Test outcome counts (first, second) against Born probabilities
/// (p_first, p_second). Requires at least `MIN_BORN_SAMPLES` samples and a
/// normalized, nondegenerate probability pair.
pub fn born_rule_test(counts: (usize, usize), expected: (f64, f64)) -> Result<BornRuleTest> {
    let n = counts.0 + counts.1;
    if n < MIN_BORN_SAMPLES {
        return Err(CoreError::TooFewSamples {
            got: n,
            need: MIN_BORN_SAMPLES,
        });
    }
    let (p0, p1) = expected;
    if !(p0.is_finite() && p1.is_finite()) {
        return Err(CoreError::NonFinite {
            what: "expected probabilities",
        });
    }
    if p0 <= 0.0 || p1 <= 0.0 || (p0 + p1 - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidParameter {
            name: "expected",
            reason: "probabilities must be positive and sum to one",
            value: p0 + p1,
        });
    }
    let nf = n as f64;
    let e0 = nf * p0;
    let e1 = nf * p1;
    let d0 = counts.0 as f64 - e0;
    let d1 = counts.1 as f64 - e1;
    let chi_square = d0 * d0 / e0 + d1 * d1 / e1;
    Ok(BornRuleTest {
        chi_square,
        observed_frequency: counts.0 as f64 / nf,
        expected_probability: p0,
        n_samples: n,
        passed: chi_square <= CHI_SQUARE_LIMIT,
    })
}

/// Per-trajectory data fed into an `EnsembleAccumulator`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryContribution {
    /// Trajectory index within the ensemble; also the RNG stream index.
    pub index: u64,
    /// Observations at the shared sample times.
    pub samples: Vec<SampleObservation>,
    /// Classified outcome (0 = left, 1 = right) when a basis was in use.
    pub outcome: Option<u8>,
    /// Number of collapse jumps (zero for diffusive dynamics).
    pub jump_count: usize,
}

/// Ensemble statistics at the shared sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    /// Shared sample times.
    pub sample_times: Vec<f64>,
    /// Trajectory count.
    pub n_trajectories: usize,
    /// Mean position variance per sample time.
    pub mean_var_x: Vec<f64>,
    /// Median position variance per sample time.
    pub median_var_x: Vec<f64>,
    /// Mean position expectation per sample time.
    pub mean_x: Vec<f64>,
    /// |ensemble mean of rho_LR| per sample time, when every trajectory
    /// reported a coherence.
    pub coherence_abs: Option<Vec<f64>>,
    /// Standard error of the complex coherence mean per sample time.
    pub coherence_stderr: Option<Vec<f64>>,
    /// Mean (left, right) lobe masses per sample time, when reported.
    pub mean_lobe_masses: Option<Vec<(f64, f64)>>,
    /// Outcome counts (left, right), when every trajectory was classified.
    pub outcome_counts: Option<(usize, usize)>,
    /// Mean jump count per trajectory.
    pub mean_jump_count: f64,
}

impl EnsembleSummary {
    /// Outcome frequencies (left, right), when available.
    pub fn outcome_frequencies(&self) -> Option<(f64, f64)> {
        self.outcome_counts.map(|(l, r)| {
            let n = (l + r) as f64;
            (l as f64 / n, r as f64 / n)
        })
    }

    /// Fit the ensemble coherence decay, when coherence was tracked.
    pub fn coherence_fit(&self) -> Result<DecayFit> {
        match (&self.coherence_abs, &self.coherence_stderr) {
            (Some(abs), Some(se)) => coherence_decay_fit(&self.sample_times, abs, se),
            _ => Err(CoreError::InsufficientSignal { usable: 0, need: MIN_FIT_POINTS }),
        }
    }
}

/// Order-independent collector of trajectory contributions. Rows are keyed
/// by trajectory index; `finalize` sorts by index and reduces sequentially,
/// so the summary is bitwise identical however the rows were pushed or
/// merged across workers.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    sample_times: Vec<f64>,
    rows: Vec<TrajectoryContribution>,
}

const TIME_MATCH_TOLERANCE: f64 = 1e-9;

impl EnsembleAccumulator {
    /// New accumulator for the given shared sample times.
    pub fn new(sample_times: Vec<f64>) -> Result<Self> {
        for pair in sample_times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(CoreError::InvalidParameter {
                    name: "sample_times",
                    reason: "must be strictly increasing",
                    value: pair[1],
                });
            }
        }
        if sample_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(CoreError::NonFinite {
                what: "sample times",
            });
        }
        Ok(Self {
            sample_times,
            rows: Vec::new(),
        })
    }

    /// Shared sample times.
    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    /// Number of collected rows.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Whether no rows were collected.
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Add one trajectory. The contribution must carry one observation per
    /// shared sample time, at matching times.
    pub fn push(&mut self, row: TrajectoryContribution) -> Result<()> {
        if row.samples.len() != self.sample_times.len() {
            return Err(CoreError::EnsembleMismatch {
                what: "trajectory sample count disagrees with accumulator",
            });
        }
        for (obs, &t) in row.samples.iter().zip(&self.sample_times) {
            if (obs.time - t).abs() > TIME_MATCH_TOLERANCE * t.abs().max(1.0) {
                return Err(CoreError::EnsembleMismatch {
                    what: "trajectory sample times disagree with accumulator",
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Absorb another accumulator over the same sample times.
    pub fn merge(&mut self, other: Self) -> Result<()> {
        if other.sample_times.len() != self.sample_times.len()
            || other
                .sample_times
                .iter()
                .zip(&self.sample_times)
                .any(|(a, b)| (a - b).abs() > TIME_MATCH_TOLERANCE * b.abs().max(1.0))
        {
            return Err(CoreError::EnsembleMismatch {
                what: "accumulators have different sample times",
            });
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    /// Reduce to ensemble statistics. Fails on an empty accumulator or on
    /// duplicate trajectory indices.
    pub fn finalize(mut self) -> Result<EnsembleSummary> {
        if self.rows.is_empty() {
            return Err(CoreError::TooFewSamples { got: 0, need: 1 });
        }
        self.rows.sort_by_key(|r| r.index);
        if self.rows.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(CoreError::EnsembleMismatch {
                what: "duplicate trajectory index",
            });
        }
        let n = self.rows.len();
        let nf = n as f64;
        let n_times = self.sample_times.len();

        let all_coherence = self
            .rows
            .iter()
            .all(|r| r.samples.iter().all(|s| s.lobe_coherence.is_some()));
        let all_masses = self
            .rows
            .iter()
            .all(|r| r.samples.iter().all(|s| s.lobe_masses.is_some()));
        let all_outcomes = self.rows.iter().all(|r| r.outcome.is_some());

        let mut mean_var_x = vec![0.0; n_times];
        let mut median_var_x = vec![0.0; n_times];
        let mut mean_x = vec![0.0; n_times];
        let mut coherence_abs = vec![0.0; n_times];
        let mut coherence_stderr = vec![0.0; n_times];
        let mut mean_lobe_masses = vec![(0.0, 0.0); n_times];
        let mut scratch = vec![0.0; n];

        for j in 0..n_times {
            let mut sum_var = 0.0;
            let mut sum_x = 0.0;
            let mut sum_c = Complex64::new(0.0, 0.0);
            let mut sum_ml = 0.0;
            let mut sum_mr = 0.0;
            for (k, row) in self.rows.iter().enumerate() {
                let s = &row.samples[j];
                sum_var += s.var_x;
                sum_x += s.mean_x;
                scratch[k] = s.var_x;
                if all_coherence {
                    sum_c += s.lobe_coherence.expect("checked above");
                }
                if all_masses {
                    let (l, r) = s.lobe_masses.expect("checked above");
                    sum_ml += l;
                    sum_mr += r;
                }
            }
            mean_var_x[j] = sum_var / nf;
            mean_x[j] = sum_x / nf;
            scratch.sort_by(f64::total_cmp);
            median_var_x[j] = if n % 2 == 1 {
                scratch[n / 2]
            } else {
                0.5 * (scratch[n / 2 - 1] + scratch[n / 2])
            };
            if all_coherence {
                let mean_c = sum_c / nf;
                coherence_abs[j] = mean_c.norm();
                // Standard error of the complex mean: sample variances of the
                // real and imaginary parts, summed, over n.
                let mut var_re = 0.0;
                let mut var_im = 0.0;
                for row in &self.rows {
                    let c = row.samples[j].lobe_coherence.expect("checked above");
                    var_re += (c.re - mean_c.re).powi(2);
                    var_im += (c.im - mean_c.im).powi(2);
                }
                let denom = (n.saturating_sub(1)).max(1) as f64;
                coherence_stderr[j] = ((var_re + var_im) / denom / nf).sqrt();
            }
            if all_masses {
                mean_lobe_masses[j] = (sum_ml / nf, sum_mr / nf);
            }
        }

        let outcome_counts = if all_outcomes {
            let left = self
                .rows
                .iter()
                .filter(|r| r.outcome.expect("checked above") == 0)
                .count();
            Some((left, n - left))
        } else {
            None
        };
        let mean_jump_count = self.rows.iter().map(|r| r.jump_count as f64).sum::<f64>() / nf;

        Ok(EnsembleSummary {
            sample_times: self.sample_times,
            n_trajectories: n,
            mean_var_x,
            median_var_x,
            mean_x,
            coherence_abs: all_coherence.then_some(coherence_abs),
            coherence_stderr: all_coherence.then_some(coherence_stderr),
            mean_lobe_masses: all_masses.then_some(mean_lobe_masses),
            outcome_counts,
            mean_jump_count,
        })
    }
}

/// Outcome of a brute-force dephasing-rate calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    /// Rate fitted from the simulated ensemble coherence.
    pub fitted_rate: f64,
    /// Exact lattice prediction for the same configuration.
    pub lattice_rate: f64,
    /// |fitted - lattice| / lattice.
    pub relative_deviation: f64,
    /// Underlying decay fit.
    pub fit: DecayFit,
    /// Ensemble size used.
    pub n_trajectories: usize,
}

/// Calibrate the two-site dephasing rate by direct simulation: evolve an
/// equal superposition of two point-supported states on a minimal 8-site
/// grid (dx = r_c, sites 1 and 5, i.e. separation 4 r_c), average the
/// site-pair coherence psi[a] conj(psi[b]) dx over the ensemble, fit its
/// exponential decay, and compare with the exact lattice rate.
pub fn calibrate_decoherence_rate(
    params: &CollapseParams,
    n_trajectories: usize,
    dt: f64,
    t_final: f64,
    master_seed: u64,
) -> Result<CalibrationReport> {
    if n_trajectories == 0 {
        return Err(CoreError::TooFewSamples { got: 0, need: 1 });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::InvalidParameter {
            name: "dt",
            reason: "must be positive and finite",
            value: dt,
        });
    }
    if !(t_final >= 20.0 * dt) {
        return Err(CoreError::InvalidParameter {
            name: "t_final",
            reason: "must cover at least 20 steps",
            value: t_final,
        });
    }
    let grid = LatticeGrid::new(8, params.r_c(), 0.0)?;
    let kernel = SmearingKernel::new(&grid, params.r_c())?;
    let (site_a, site_b) = (1usize, 5usize);
    let dx = grid.dx();
    let amp = Complex64::new(1.0 / (2.0 * dx).sqrt(), 0.0);
    let mut initial = vec![Complex64::new(0.0, 0.0); 8];
    initial[site_a] = amp;
    initial[site_b] = amp;
    let initial = WaveFunction::new(grid, initial)?;

    let n_steps = (t_final / dt).round() as usize;
    let sample_every = (n_steps / 12).max(1);
    let mut sample_steps = vec![0usize];
    let mut s = sample_every;
    while s < n_steps {
        sample_steps.push(s);
        s += sample_every;
    }
    sample_steps.push(n_steps);
    let n_samples = sample_steps.len();

    let mut sums = vec![Complex64::new(0.0, 0.0); n_samples];
    let mut values = vec![Vec::with_capacity(n_trajectories); n_samples];
    let mut stepper = CslStepper::new(&kernel, params, dt, None)?;
    for k in 0..n_trajectories {
        let mut rng = trajectory_rng(master_seed, k as u64);
        let mut buf = initial.amplitudes().to_vec();
        let mut cursor = 0usize;
        for step in 0..=n_steps {
            if cursor < n_samples && sample_steps[cursor] == step {
                let c = buf[site_a] * buf[site_b].conj() * dx;
                sums[cursor] += c;
                values[cursor].push(c.norm_sqr());
                cursor += 1;
            }
            if step < n_steps {
                stepper.step_in_place(&mut buf, &mut rng)?;
            }
        }
    }

    let nf = n_trajectories as f64;
    let mut times = Vec::with_capacity(n_samples);
    let mut abs = Vec::with_capacity(n_samples);
    let mut stderr = Vec::with_capacity(n_samples);
    for j in 0..n_samples {
        let mean = sums[j] / nf;
        times.push(sample_steps[j] as f64 * dt);
        abs.push(mean.norm());
        // Conservative scalar error from the spread of |c|^2 around |mean|^2.
        let denom = n_trajectories.saturating_sub(1).max(1) as f64;
        let var = values[j]
            .iter()
            .map(|v| (v - mean.norm_sqr()).powi(2))
            .sum::<f64>()
            / denom;
        let se_norm_sqr = (var / nf).sqrt();
        // d|c| = d(|c|^2) / (2 |c|)
        stderr.push(if mean.norm() > 0.0 {
            se_norm_sqr / (2.0 * mean.norm())
        } else {
            f64::INFINITY
        });
    }

    let fit = coherence_decay_fit(&times, &abs, &stderr)?;
    let lattice_rate = decoherence_rate_between_sites(&kernel, params, site_a, site_b);
    Ok(CalibrationReport {
        fitted_rate: fit.rate,
        lattice_rate,
        relative_deviation: (fit.rate - lattice_rate).abs() / lattice_rate,
        fit,
        n_trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_gaussian_packet, superpose};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cat_setup() -> (LatticeGrid, TwoLobeBasis, WaveFunction) {
        let grid = LatticeGrid::new(256, 0.125, -16.0).unwrap();
        let basis = TwoLobeBasis::gaussian_pair(&grid, -5.0, 5.0, 1.0).unwrap();
        let left = make_gaussian_packet(&grid, -5.0, 1.0, 0.0).unwrap();
        let right = make_gaussian_packet(&grid, 5.0, 1.0, 0.0).unwrap();
        let cat = superpose(
            Complex64::new(1.0, 0.0),
            &left,
            Complex64::new(1.0, 0.0),
            &right,
        )
        .unwrap();
        (grid, basis, cat)
    }

    #[test]
    fn close_templates_are_degenerate() {
        let grid = LatticeGrid::new(256, 0.125, -16.0).unwrap();
        let err = TwoLobeBasis::gaussian_pair(&grid, -0.3, 0.3, 1.0).unwrap_err();
        match err {
            CoreError::DegenerateLobes { overlap } => {
                // Gaussian overlap exp(-d^2 / 8 sigma^2) with d = 0.6.
                assert_relative_eq!(overlap, (-0.045f64).exp(), max_relative = 1e-3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn cat_state_reduces_to_half_half() {
        let (_, basis, cat) = cat_setup();
        let rho = reduce_to_two_lobes(&cat, &basis).unwrap();
        // Populations sit within the residual template overlap exp(-12.5)
        // of one half.
        assert_abs_diff_eq!(rho.rho_ll, 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(rho.rho_rr, 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(rho.rho_lr.re, 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(rho.rho_lr.im, 0.0, epsilon = 1e-12);
        rho.validate(1e-5).unwrap();
        let (hi, lo) = rho.eigenvalues();
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn classification_follows_majority_mass() {
        let (grid, basis, _cat) = cat_setup();
        // Exact tie (two equal spikes straddling the boundary) goes left.
        let mut spikes = vec![Complex64::new(0.0, 0.0); grid.n_sites()];
        let amp = Complex64::new(1.0, 0.0);
        spikes[grid.nearest_site(-5.0)] = amp;
        spikes[grid.nearest_site(5.0)] = amp;
        let tie = WaveFunction::new(grid, spikes).unwrap().normalized().unwrap();
        assert_eq!(basis.classify(&tie).unwrap(), 0);
        let left_heavy = superpose(
            Complex64::new(0.9, 0.0),
            basis.left(),
            Complex64::new(0.1, 0.0),
            basis.right(),
        )
        .unwrap();
        assert_eq!(basis.classify(&left_heavy).unwrap(), 0);
        let right_heavy = superpose(
            Complex64::new(0.1, 0.0),
            basis.left(),
            Complex64::new(0.9, 0.0),
            basis.right(),
        )
        .unwrap();
        assert_eq!(basis.classify(&right_heavy).unwrap(), 1);
        let _ = grid;
    }

    #[test]
    fn dephasing_oracle_damps_only_coherence() {
        let rho = TwoLobeDensityMatrix {
            rho_ll: 0.5,
            rho_rr: 0.5,
            rho_lr: Complex64::new(0.5, 0.0),
        };
        let evolved = dephasing_oracle_evolve(&rho, 2.0, 0.7);
        assert_eq!(evolved.rho_ll, 0.5);
        assert_eq!(evolved.rho_rr, 0.5);
        assert_relative_eq!(evolved.rho_lr.re, 0.5 * (-1.4f64).exp(), max_relative = 1e-12);
        // Trace distance between original and evolved: |c| (1 - exp(-rate t)).
        let td = rho.trace_distance(&evolved);
        assert_relative_eq!(td, 0.5 * (1.0 - (-1.4f64).exp()), max_relative = 1e-12);
        assert_eq!(rho.trace_distance(&rho), 0.0);
        assert_eq!(td, evolved.trace_distance(&rho));
    }

    #[test]
    fn continuum_rate_saturates_at_jump_rate() {
        // gamma = lambda sqrt(4 pi r_c^2) makes the far-separation rate equal
        // the jump rate for a single-nucleon mass.
        let params = CollapseParams::new(1.0, 1.0, 1.0, 1, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            decoherence_rate_continuum(&params, 1e3),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(decoherence_rate_continuum(&params, 0.0), 0.0);
        // At d = 2 r_c the suppression factor is 1 - exp(-1).
        assert_relative_eq!(
            decoherence_rate_continuum(&params, 2.0),
            1.0 - (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn lattice_rate_matches_continuum_on_fine_grid() {
        let params = CollapseParams::new(1.0, 1.0, 1.0, 1, 1.0, 1.0).unwrap();
        let grid = LatticeGrid::new(512, 0.05, -12.8).unwrap();
        let kernel = SmearingKernel::new(&grid, 1.0).unwrap();
        // Sites separated by d = 4 r_c.
        let a = grid.nearest_site(-2.0);
        let b = grid.nearest_site(2.0);
        let lat = decoherence_rate_between_sites(&kernel, &params, a, b);
        let cont = decoherence_rate_continuum(&params, 4.0);
        assert_relative_eq!(lat, cont, max_relative = 1e-3);
    }

    #[test]
    fn mass_amplification_is_quadratic() {
        let one = CollapseParams::new(1.0, 1.0, 1.0, 1, 1.0, 1.0).unwrap();
        let four = CollapseParams::new(1.0, 1.0, 1.0, 4, 1.0, 4.0).unwrap();
        let r1 = decoherence_rate_continuum(&one, 3.0);
        let r4 = decoherence_rate_continuum(&four, 3.0);
        assert_relative_eq!(r4 / r1, 16.0, max_relative = 1e-12);
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let times: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| 0.5 * (-2.0 * t).exp()).collect();
        let fit = fit_exponential_decay(&times, &values).unwrap();
        assert_relative_eq!(fit.rate, 2.0, max_relative = 1e-9);
        assert_relative_eq!(fit.amplitude, 0.5, max_relative = 1e-9);
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn constant_series_fits_zero_rate() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let values = vec![0.25; 10];
        let fit = fit_exponential_decay(&times, &values).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.0, epsilon = 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            fit_exponential_decay(&[0.0], &[1.0]),
            Err(CoreError::TooFewSamples { .. })
        ));
        assert!(matches!(
            fit_exponential_decay(&[0.0, 1.0], &[1.0, -0.5]),
            Err(CoreError::InvalidParameter { .. })
        ));
        assert!(matches!(
            fit_exponential_decay(&[0.0, 0.0], &[1.0, 1.0]),
            Err(CoreError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn noisy_points_are_filtered_out() {
        let times: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| (-1.0 * t).exp()).collect();
        // Last five points drowned in noise.
        let stderr: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(i, v)| if i < 5 { v / 100.0 } else { *v })
            .collect();
        let fit = coherence_decay_fit(&times, &values, &stderr).unwrap();
        assert_eq!(fit.n_points, 5);
        assert_relative_eq!(fit.rate, 1.0, max_relative = 1e-9);
        // All points drowned in noise.
        let err = coherence_decay_fit(&times, &values, &values).unwrap_err();
        assert!(matches!(err, CoreError::InsufficientSignal { usable: 0, need: 5 }));
    }

    #[test]
    fn born_test_accepts_exact_and_rejects_biased_counts() {
        let exact = born_rule_test((5000, 5000), (0.5, 0.5)).unwrap();
        assert_eq!(exact.chi_square, 0.0);
        assert!(exact.passed);
        // 3.2 sigma excess: chi^2 = 2 * 160^2 / 5000 = 10.24 > 9.
        let biased = born_rule_test((5160, 4840), (0.5, 0.5)).unwrap();
        assert_relative_eq!(biased.chi_square, 10.24, max_relative = 1e-12);
        assert!(!biased.passed);
        assert!(matches!(
            born_rule_test((50, 49), (0.5, 0.5)),
            Err(CoreError::TooFewSamples { got: 99, need: 100 })
        ));
        assert!(matches!(
            born_rule_test((100, 100), (0.7, 0.7)),
            Err(CoreError::InvalidParameter { .. })
        ));
    }

    fn obs(time: f64, var: f64, coh: f64) -> SampleObservation {
        SampleObservation {
            time,
            mean_x: 0.0,
            var_x: var,
            lobe_masses: Some((0.5, 0.5)),
            lobe_coherence: Some(Complex64::new(coh, 0.0)),
        }
    }

    fn row(index: u64, vars: &[f64]) -> TrajectoryContribution {
        TrajectoryContribution {
            index,
            samples: vars
                .iter()
                .enumerate()
                .map(|(j, &v)| obs(j as f64, v, 0.5 / (index + 1) as f64))
                .collect(),
            outcome: Some((index % 2) as u8),
            jump_count: index as usize,
        }
    }

    #[test]
    fn summary_is_independent_of_push_and_merge_order() {
        let times = vec![0.0, 1.0, 2.0];
        let mut a = EnsembleAccumulator::new(times.clone()).unwrap();
        a.push(row(2, &[3.0, 2.0, 1.0])).unwrap();
        a.push(row(0, &[1.0, 1.0, 1.0])).unwrap();
        let mut b = EnsembleAccumulator::new(times.clone()).unwrap();
        b.push(row(1, &[2.0, 4.0, 6.0])).unwrap();
        b.push(row(3, &[4.0, 3.0, 2.0])).unwrap();
        let mut merged_ab = a.clone();
        merged_ab.merge(b.clone()).unwrap();

        let mut c = EnsembleAccumulator::new(times).unwrap();
        for idx in [3u64, 1, 0, 2] {
            let vars: Vec<f64> = match idx {
                0 => vec![1.0, 1.0, 1.0],
                1 => vec![2.0, 4.0, 6.0],
                2 => vec![3.0, 2.0, 1.0],
                _ => vec![4.0, 3.0, 2.0],
            };
            c.push(row(idx, &vars)).unwrap();
        }

        let s1 = merged_ab.finalize().unwrap();
        let s2 = c.finalize().unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.n_trajectories, 4);
        assert_eq!(s1.mean_var_x, vec![2.5, 2.5, 2.5]);
        assert_eq!(s1.median_var_x, vec![2.5, 2.5, 1.5]);
        assert_eq!(s1.outcome_counts, Some((2, 2)));
        assert_eq!(s1.mean_jump_count, 1.5);
        assert!(s1.coherence_abs.is_some());
    }

    #[test]
    fn accumulator_rejects_inconsistent_rows() {
        let mut acc = EnsembleAccumulator::new(vec![0.0, 1.0]).unwrap();
        // Wrong sample count.
        let bad = TrajectoryContribution {
            index: 0,
            samples: vec![obs(0.0, 1.0, 0.5)],
            outcome: None,
            jump_count: 0,
        };
        assert!(matches!(
            acc.push(bad),
            Err(CoreError::EnsembleMismatch { .. })
        ));
        // Wrong times.
        let shifted = TrajectoryContribution {
            index: 0,
            samples: vec![obs(0.0, 1.0, 0.5), obs(1.5, 1.0, 0.5)],
            outcome: None,
            jump_count: 0,
        };
        assert!(matches!(
            acc.push(shifted),
            Err(CoreError::EnsembleMismatch { .. })
        ));
        // Duplicate index.
        acc.push(row(7, &[1.0, 2.0])).unwrap();
        acc.push(row(7, &[1.0, 2.0])).unwrap();
        assert!(matches!(
            acc.finalize(),
            Err(CoreError::EnsembleMismatch { .. })
        ));
        // Empty.
        let empty = EnsembleAccumulator::new(vec![0.0]).unwrap();
        assert!(matches!(
            empty.finalize(),
            Err(CoreError::TooFewSamples { .. })
        ));
        // Unsorted times.
        assert!(EnsembleAccumulator::new(vec![1.0, 0.5]).is_err());
    }
}
