//! Continuous stochastic localization: an Ito diffusion of the wave
//! function driven by spatially smeared white noise coupled to the mass
//! density.
//!
//! With smeared mass-density operators (M(x) psi)(q) = m g(q - x) psi(q),
//! where g is a unit-area Gaussian of width r_c, the state obeys
//!
//!   d psi = [ -(i/hbar) H dt
//!             + (sqrt(gamma)/m0) sum_i (M(x_i) - <M(x_i)>) dW_i dx
//!             - (gamma/2 m0^2) sum_i (M(x_i) - <M(x_i)>)^2 dx dt ] psi,
//!
//! with independent lattice Wiener increments of variance dt/dx. The drift
//! term makes the squared norm a martingale: renormalization corrections in
//! an exact integration vanish on average, so the per-step correction is a
//! direct measure of integration error and is hard-limited by
//! `NORM_CORRECTION_LIMIT`.
//!
//! One Euler-Maruyama step costs five lattice FFTs: the density spectrum,
//! two smoothing convolutions for the drift, and the noise spectrum plus
//! its convolution. The Hamiltonian term, when present, is applied by plain
//! Euler with a spectral kinetic product, adding two FFTs.
//!
//! Ref: Ghirardi, Pearle & Rimini, Phys. Rev. A 42, 78 (1990).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::fft::Spectral;
use crate::grid::LatticeGrid;
use crate::params::CollapseParams;
use crate::propagator::HamiltonianSpec;
use crate::state::WaveFunction;
use crate::trajectory::{NormMonitor, ObservablePlan, TrajectoryResult};

/// Largest tolerated single-step renormalization |norm - 1|. Exceeding it
/// means the step size is too coarse for the configured noise strength.
pub const NORM_CORRECTION_LIMIT: f64 = 1e-3;

/// Relative tolerance when aligning sample times to step boundaries.
const STEP_ALIGN_EPS: f64 = 1e-6;

/// Unit-area Gaussian smearing kernel g(u) = c exp(-u^2 / 2 r_c^2) on
/// periodic minimal-image offsets, normalized so sum_u g(u) dx = 1 exactly.
#[derive(Debug, Clone)]
pub struct SmearingKernel {
    grid: LatticeGrid,
    r_c: f64,
    values: Vec<f64>,
    spectrum: Vec<Complex64>,
    sum_sq: f64,
}

impl SmearingKernel {
    /// Tabulates the kernel. Requires r_c >= dx so the smearing is
    /// resolvable.
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
                (-u * u / (2.0 * r_c * r_c)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum::<f64>() * grid.dx();
        let values: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let sum_sq = values.iter().map(|v| v * v).sum::<f64>() * grid.dx();
        let mut spectrum: Vec<Complex64> =
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Spectral::new(n).forward(&mut spectrum);
        Ok(Self {
            grid: *grid,
            r_c,
            values,
            spectrum,
            sum_sq,
        })
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    /// g at offset index `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Kernel values in offset order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unnormalized DFT of the kernel values.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// sum_u g(u)^2 dx, the autocorrelation of the kernel at zero offset.
    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }
}

/// Fills `out` with independent lattice Wiener increments of one time step:
/// dW_i ~ N(0, dt/dx), drawn in site order.
pub fn sample_wiener_step<R: Rng + ?Sized>(out: &mut [f64], dt: f64, dx: f64, rng: &mut R) {
    let sd = (dt / dx).sqrt();
    for w in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *w = z * sd;
    }
}

/// Smeared mass density field <M(x_i)> = sum_q m g(q - x_i) |psi_q|^2 dx
/// for all lattice points x_i, by circular FFT convolution.
pub fn mass_density_field(psi: &WaveFunction, kernel: &SmearingKernel, mass: f64) -> Result<Vec<f64>> {
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
    Ok(buf.iter().map(|c| mass * c.re * dx).collect())
}

/// Result of one diffusion step.
#[derive(Debug, Clone)]
pub struct CslStepOutcome {
    /// Renormalized state after the step.
    pub state: WaveFunction,
    /// Signed pre-renormalization norm deviation, ||psi'|| - 1.
    pub norm_correction: f64,
}

/// Reusable stepper holding the spectral plan and every per-step buffer, so
/// long trajectories allocate nothing inside the loop.
pub struct CslStepper {
    grid: LatticeGrid,
    dt: f64,
    // phase-space constants
    coupling: f64,     // sqrt(gamma) / m0
    drift: f64,        // gamma / (2 m0^2) * dt
    m2_s2: f64,        // m^2 sum g^2 dx
    mass: f64,
    // kernel spectra
    ghat: Vec<Complex64>,
    ghat_sq: Vec<Complex64>,
    // optional Euler Hamiltonian term
    hterm: Option<EulerHamiltonian>,
    // scratch
    spectral: Spectral,
    rho_hat: Vec<Complex64>,
    field_a: Vec<Complex64>,
    field_b: Vec<Complex64>,
    mfield: Vec<f64>,
    dw: Vec<f64>,
}

struct EulerHamiltonian {
    kinetic: Vec<f64>, // hbar^2 k^2 / 2m in wavenumber order
    potential: Vec<f64>,
    minus_i_dt_over_hbar: Complex64,
    scratch: Vec<Complex64>,
}

impl CslStepper {
    /// Builds a stepper for fixed dt. The Hamiltonian, when given, must
    /// match the kernel's grid.
    pub fn new(
        kernel: &SmearingKernel,
        params: &CollapseParams,
        dt: f64,
        h: Option<&HamiltonianSpec>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "dt",
                reason: "must be strictly positive and finite",
                value: dt,
            });
        }
        let grid = *kernel.grid();
        let n = grid.n_sites();
        let hterm = match h {
            Some(h) => {
                if h.potential().len() != n {
                    return Err(CoreError::GridMismatch);
                }
                let hbar = params.hbar();
                let kinetic = grid
                    .wavenumbers()
                    .iter()
                    .map(|k| hbar * hbar * k * k / (2.0 * h.mass()))
                    .collect();
                Some(EulerHamiltonian {
                    kinetic,
                    potential: h.potential().to_vec(),
                    minus_i_dt_over_hbar: Complex64::new(0.0, -dt / hbar),
                    scratch: vec![Complex64::new(0.0, 0.0); n],
                })
            }
            None => None,
        };
        let m0 = params.m0();
        let mass = params.mass();
        Ok(Self {
            grid,
            dt,
            coupling: params.gamma().sqrt() / m0,
            drift: params.gamma() / (2.0 * m0 * m0) * dt,
            m2_s2: mass * mass * kernel.sum_sq(),
            mass,
            ghat: kernel.spectrum().to_vec(),
            ghat_sq: kernel.spectrum().iter().map(|s| s * s).collect(),
            hterm,
            spectral: Spectral::new(n),
            rho_hat: vec![Complex64::new(0.0, 0.0); n],
            field_a: vec![Complex64::new(0.0, 0.0); n],
            field_b: vec![Complex64::new(0.0, 0.0); n],
            mfield: vec![0.0; n],
            dw: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    /// Advances the amplitude buffer by one step and renormalizes. Returns
    /// the signed pre-renormalization norm deviation ||psi'|| - 1. Fails
    /// with `NormCorrectionExceeded` when its magnitude passes
    /// [`NORM_CORRECTION_LIMIT`].
    pub fn step_in_place<R: Rng + ?Sized>(
        &mut self,
        psi: &mut [Complex64],
        rng: &mut R,
    ) -> Result<f64> {
        let n = self.grid.n_sites();
        debug_assert_eq!(psi.len(), n);
        let dx = self.grid.dx();

        // Density spectrum.
        for (r, a) in self.rho_hat.iter_mut().zip(psi.iter()) {
            *r = Complex64::new(a.norm_sqr(), 0.0);
        }
        self.spectral.forward(&mut self.rho_hat);

        // Smeared mass field <M(x)> = m (g conv rho) dx.
        for ((fa, r), g) in self.field_a.iter_mut().zip(&self.rho_hat).zip(&self.ghat) {
            *fa = r * g;
        }
        self.spectral.inverse(&mut self.field_a);
        let mut sum_mf_sq = 0.0;
        for (mf, fa) in self.mfield.iter_mut().zip(&self.field_a) {
            *mf = self.mass * fa.re * dx;
            sum_mf_sq += *mf * *mf;
        }
        let sm = sum_mf_sq * dx;

        // Double-smeared density ((g conv g) conv rho) dx^2 for the drift.
        for ((fb, r), g2) in self.field_b.iter_mut().zip(&self.rho_hat).zip(&self.ghat_sq) {
            *fb = r * g2;
        }
        self.spectral.inverse(&mut self.field_b);

        // Noise field B = m (g conv dW) dx and projection C = sum <M> dW dx.
        sample_wiener_step(&mut self.dw, self.dt, dx, rng);
        let mut c = 0.0;
        for ((fa, &w), mf) in self.field_a.iter_mut().zip(&self.dw).zip(&self.mfield) {
            *fa = Complex64::new(w, 0.0);
            c += mf * w;
        }
        c *= dx;
        self.spectral.forward(&mut self.field_a);
        for (fa, g) in self.field_a.iter_mut().zip(&self.ghat) {
            *fa *= g;
        }
        self.spectral.inverse(&mut self.field_a);

        // Optional Euler Hamiltonian increment -(i dt / hbar) H psi.
        if let Some(ht) = &mut self.hterm {
            ht.scratch.copy_from_slice(psi);
            self.spectral.forward(&mut ht.scratch);
            for (s, k) in ht.scratch.iter_mut().zip(&ht.kinetic) {
                *s *= *k;
            }
            self.spectral.inverse(&mut ht.scratch);
            for ((s, v), a) in ht.scratch.iter_mut().zip(&ht.potential).zip(psi.iter()) {
                *s = (*s + v * a) * ht.minus_i_dt_over_hbar;
            }
        }

        // psi' = psi + coupling (B - C) psi - drift D psi dt [+ H term],
        // with D = m^2 s2 - 2 m^2 ((g conv g) conv rho) dx^2 + sum <M>^2 dx.
        let mm = self.mass * self.mass;
        let mut norm_sq = 0.0;
        for q in 0..n {
            let b = self.mass * self.field_a[q].re * dx;
            let d = self.m2_s2 - 2.0 * mm * self.field_b[q].re * dx * dx + sm;
            let mut next = psi[q] * (1.0 + self.coupling * (b - c) - self.drift * d);
            if let Some(ht) = &self.hterm {
                next += ht.scratch[q];
            }
            psi[q] = next;
            norm_sq += next.norm_sqr();
        }
        norm_sq *= dx;
        if !norm_sq.is_finite() {
            return Err(CoreError::NonFinite {
                what: "norm after diffusion step",
            });
        }
        let correction = norm_sq.sqrt() - 1.0;
        if correction.abs() > NORM_CORRECTION_LIMIT {
            return Err(CoreError::NormCorrectionExceeded {
                correction,
                limit: NORM_CORRECTION_LIMIT,
            });
        }
        let scale = 1.0 / norm_sq.sqrt();
        for a in psi.iter_mut() {
            *a *= scale;
        }
        Ok(correction)
    }
}

/// One diffusion step as a pure function on states. Trajectory loops should
/// prefer [`CslStepper`], which reuses its buffers.
pub fn csl_step<R: Rng + ?Sized>(
    psi: &WaveFunction,
    kernel: &SmearingKernel,
    params: &CollapseParams,
    dt: f64,
    h: Option<&HamiltonianSpec>,
    rng: &mut R,
) -> Result<CslStepOutcome> {
    if psi.grid() != kernel.grid() {
        return Err(CoreError::GridMismatch);
    }
    let mut stepper = CslStepper::new(kernel, params, dt, h)?;
    let mut buf = psi.amplitudes().to_vec();
    let norm_correction = stepper.step_in_place(&mut buf, rng)?;
    Ok(CslStepOutcome {
        state: WaveFunction::new(*psi.grid(), buf)?,
        norm_correction,
    })
}

/// Runs one diffusion trajectory with fixed step dt, sampling according to
/// `plan`. Every sample time must lie on a step boundary (an integer
/// multiple of dt within relative tolerance 1e-6) so that the noise
/// discretization is uniform across the run.
pub fn run_csl_trajectory<R: Rng + ?Sized>(
    initial: &WaveFunction,
    params: &CollapseParams,
    h: Option<&HamiltonianSpec>,
    dt: f64,
    plan: &ObservablePlan,
    rng: &mut R,
) -> Result<TrajectoryResult> {
    let grid = *initial.grid();
    let kernel = SmearingKernel::new(&grid, params.r_c())?;
    let mut stepper = CslStepper::new(&kernel, params, dt, h)?;

    let mut sample_steps = Vec::with_capacity(plan.sample_times().len());
    for &t in plan.sample_times() {
        let steps = t / dt;
        let rounded = steps.round();
        if (steps - rounded).abs() > STEP_ALIGN_EPS * rounded.max(1.0) {
            return Err(CoreError::InvalidParameter {
                name: "sample_times",
                reason: "must be integer multiples of dt",
                value: t,
            });
        }
        sample_steps.push(rounded as u64);
    }

    let total_steps = *sample_steps.last().expect("plan is never empty");
    let mut buf = initial.normalized()?.into_amplitudes();
    let mut monitor = NormMonitor::default();
    let mut samples = Vec::with_capacity(sample_steps.len());
    let mut cursor = 0usize;
    for step in 0..=total_steps {
        if cursor < sample_steps.len() && sample_steps[cursor] == step {
            let state = WaveFunction::new(grid, buf.clone())?;
            samples.push(plan.observe(&state, plan.sample_times()[cursor])?);
            cursor += 1;
        }
        if step < total_steps {
            let correction = stepper.step_in_place(&mut buf, rng)?;
            monitor.record(correction);
        }
    }

    Ok(TrajectoryResult {
        final_state: WaveFunction::new(grid, buf)?,
        jumps: Vec::new(),
        samples,
        norm_monitor: monitor,
    })
}
