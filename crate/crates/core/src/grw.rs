//! Discrete localization jumps: piecewise unitary evolution interrupted by
//! Gaussian hits at Poisson-distributed times.
//!
//! A composite of N nucleons is hit at total rate N*lambda. A hit at center
//! x multiplies the wave function by a Gaussian of width r_c and
//! renormalizes,
//!
//!   psi -> L(x) psi / ||L(x) psi||,
//!
//! and the center is drawn from p(x) = ||L(x) psi||^2, which on the lattice
//! is the circular convolution of |psi|^2 with the squared hit profile K of
//! width r_c / sqrt(2). K is normalized on the lattice, sum_u K(u) dx = 1,
//! so the center density integrates to exactly one for any normalized state
//! and the sampling is exhaustive by construction.
//!
//! Ref: Ghirardi, Rimini & Weber, Phys. Rev. D 34, 470 (1986).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{CoreError, Result};
use crate::fft::Spectral;
use crate::grid::LatticeGrid;
use crate::params::CollapseParams;
use crate::propagator::{evolve_in_place, HamiltonianSpec};
use crate::state::WaveFunction;
use crate::trajectory::{JumpEvent, NormMonitor, ObservablePlan, TrajectoryResult};

/// Post-hit squared norm below which the jump is rejected as a collapse to
/// (numerical) zero.
pub const COLLAPSE_NORM_FLOOR: f64 = 1e-12;

/// Squared hit profile K(u) = c * exp(-u^2 / r_c^2), tabulated on periodic
/// minimal-image offsets and normalized so that sum_u K(u) dx = 1 exactly.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    grid: LatticeGrid,
    r_c: f64,
    profile: Vec<f64>,
    spectrum: Vec<Complex64>,
}

impl JumpKernel {
    /// Tabulates the profile. Requires r_c >= dx so the hit is resolvable.
    pub fn new(grid: &LatticeGrid, r_c: f64) -> Result<Self> {
        if !(r_c > 0.0) || !r_c.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "r_c",
                reason: "must be strictly positive and finite",
                value: r_c,
            });
        }
        if r_c < grid.dx() {
            return Err(CoreError::InvalidParameter {
                name: "r_c",
                reason: "must be at least one lattice spacing",
                value: r_c,
            });
        }
        let n = grid.n_sites();
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let u = grid.offset(i);
                (-u * u / (r_c * r_c)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum::<f64>() * grid.dx();
        let profile: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut spectrum: Vec<Complex64> =
            profile.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Spectral::new(n).forward(&mut spectrum);
        Ok(Self {
            grid: *grid,
            r_c,
            profile,
            spectrum,
        })
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    /// K at offset index `i` (row of the circulant convolution matrix).
    pub fn value(&self, i: usize) -> f64 {
        self.profile[i]
    }

    /// Full profile in offset order.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }
}

/// Probability density of jump centers, p_j = sum_q K(j - q) |psi_q|^2 dx,
/// evaluated for all lattice centers by circular FFT convolution. For any
/// normalized state the density is complete: sum_j p_j dx = 1 exactly, up
/// to FFT rounding.
pub fn jump_probability_density(psi: &WaveFunction, kernel: &JumpKernel) -> Result<Vec<f64>> {
    if psi.grid() != kernel.grid() {
        return Err(CoreError::GridMismatch);
    }
    let n = kernel.grid.n_sites();
    let dx = kernel.grid.dx();
    let mut buf: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .map(|a| Complex64::new(a.norm_sqr(), 0.0))
        .collect();
    let mut sp = Spectral::new(n);
    sp.forward(&mut buf);
    for (b, s) in buf.iter_mut().zip(&kernel.spectrum) {
        *b *= s;
    }
    sp.inverse(&mut buf);
    // Roundoff can leave tiny negative values where the density vanishes.
    Ok(buf.iter().map(|c| (c.re * dx).max(0.0)).collect())
}

/// Draws a jump center site by inverse-CDF sampling of the center density.
pub fn sample_jump_center<R: Rng + ?Sized>(
    psi: &WaveFunction,
    kernel: &JumpKernel,
    rng: &mut R,
) -> Result<usize> {
    let p = jump_probability_density(psi, kernel)?;
    let dx = kernel.grid.dx();
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in &p {
        acc += v * dx;
        cdf.push(acc);
    }
    let total = *cdf.last().expect("grid is never empty");
    if !(total > 0.0) || !total.is_finite() {
        return Err(CoreError::ZeroVector { norm_sq: total });
    }
    // Scale the uniform draw by the actual total so rounding in the CDF
    // cannot push the draw past the last cell.
    let target = rng.gen::<f64>() * total;
    let idx = cdf.partition_point(|&c| c <= target);
    Ok(idx.min(p.len() - 1))
}

/// Poisson jump schedule: event times on [0, t_final), strictly increasing,
/// drawn by summing exponential waiting times of rate `rate`.
pub fn sample_jump_times<R: Rng + ?Sized>(
    rate: f64,
    t_final: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "rate",
            reason: "must be non-negative and finite",
            value: rate,
        });
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "t_final",
            reason: "must be non-negative and finite",
            value: t_final,
        });
    }
    let mut times = Vec::new();
    if rate == 0.0 {
        return Ok(times);
    }
    let exp = Exp::new(rate).expect("rate validated positive");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= t_final {
            return Ok(times);
        }
        times.push(t);
    }
}

/// Applies a localization hit centered on lattice site `center_site` and
/// renormalizes. Returns the new state and the pre-normalization squared
/// norm ||L psi||^2 (the center's probability density). Fails with
/// `CollapsedToZero` when that weight is below `COLLAPSE_NORM_FLOOR`.
pub fn apply_jump(
    psi: &WaveFunction,
    kernel: &JumpKernel,
    center_site: usize,
) -> Result<(WaveFunction, f64)> {
    if psi.grid() != kernel.grid() {
        return Err(CoreError::GridMismatch);
    }
    let n = kernel.grid.n_sites();
    if center_site >= n {
        return Err(CoreError::InvalidParameter {
            name: "center_site",
            reason: "must index a lattice site",
            value: center_site as f64,
        });
    }
    let dx = kernel.grid.dx();
    let mut weight = 0.0;
    for (q, a) in psi.amplitudes().iter().enumerate() {
        // offset index of site q relative to the center, wrapped
        let off = (q + n - center_site) % n;
        weight += kernel.profile[off] * a.norm_sqr();
    }
    weight *= dx;
    if weight < COLLAPSE_NORM_FLOOR {
        return Err(CoreError::CollapsedToZero {
            center: kernel.grid.x(center_site),
            norm_sq: weight,
        });
    }
    let scale = 1.0 / weight.sqrt();
    let amplitudes: Vec<Complex64> = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(q, a)| {
            let off = (q + n - center_site) % n;
            a * (kernel.profile[off].sqrt() * scale)
        })
        .collect();
    Ok((WaveFunction::new(kernel.grid, amplitudes)?, weight))
}

/// Runs one jump trajectory: unitary evolution under `h` (identity when
/// `None`), interrupted by hits at Poisson times of rate N*lambda, sampled
/// according to `plan`. At coinciding times the sample is taken before the
/// jump. Jumps at or after the final sample time do not fire.
pub fn run_grw_trajectory<R: Rng + ?Sized>(
    initial: &WaveFunction,
    params: &CollapseParams,
    h: Option<&HamiltonianSpec>,
    dt: f64,
    plan: &ObservablePlan,
    rng: &mut R,
) -> Result<TrajectoryResult> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "dt",
            reason: "must be strictly positive and finite",
            value: dt,
        });
    }
    let grid = *initial.grid();
    let kernel = JumpKernel::new(&grid, params.r_c())?;
    let jump_times = sample_jump_times(params.effective_jump_rate(), plan.t_final(), rng)?;

    let mut buf = initial.normalized()?.into_amplitudes();
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(plan.sample_times().len());
    let mut jumps = Vec::with_capacity(jump_times.len());
    let mut si = 0usize;
    let mut ji = 0usize;

    loop {
        let next_sample = plan.sample_times().get(si).copied();
        let next_jump = jump_times.get(ji).copied();
        // Samples win ties so an observation at a jump time sees the
        // pre-jump state.
        let (target, is_sample) = match (next_sample, next_jump) {
            (None, None) => break,
            (Some(s), None) => (s, true),
            (None, Some(j)) => (j, false),
            (Some(s), Some(j)) => {
                if s <= j {
                    (s, true)
                } else {
                    (j, false)
                }
            }
        };
        let span = target - t;
        if span > 0.0 {
            if let Some(h) = h {
                evolve_in_place(&mut buf, &grid, h, params.hbar(), span, dt)?;
            }
            t = target;
        }
        let state = WaveFunction::new(grid, buf.clone())?;
        if is_sample {
            samples.push(plan.observe(&state, t)?);
            si += 1;
        } else {
            let center = sample_jump_center(&state, &kernel, rng)?;
            let (hit, weight) = apply_jump(&state, &kernel, center)?;
            buf = hit.into_amplitudes();
            jumps.push(JumpEvent {
                time: t,
                center: grid.x(center),
                weight,
            });
            ji += 1;
        }
    }

    Ok(TrajectoryResult {
        final_state: WaveFunction::new(grid, buf)?,
        jumps,
        samples,
        // Evolution between hits is exactly unitary; nothing to correct.
        norm_monitor: NormMonitor::default(),
    })
}
