//! Norm-preserving unitary propagation by spectral operator splitting.
//!
//! One step of size dt applies the Strang factorization
//!
//!   exp(-i V dt / 2 hbar) . F^-1 exp(-i hbar k^2 dt / 2m) F . exp(-i V dt / 2 hbar)
//!
//! where F is the lattice Fourier transform. Every factor is a diagonal
//! unitary, so the step preserves the norm to rounding regardless of dt;
//! the declared accuracy order in dt is 2 (exact for V = 0).
//!
//! Ref: Feit, Fleck & Steiger, J. Comput. Phys. 47, 412 (1982).

use num_complex::Complex64;

use crate::error::CoreError;
use crate::fft::Spectral;
use crate::grid::LatticeGrid;
use crate::state::WaveFunction;

/// Declared global accuracy order of the splitting scheme.
pub const PROPAGATOR_ORDER: u32 = 2;

/// Relative slack when deciding whether a residual partial step is zero.
const TIME_EPS: f64 = 1e-9;

/// Kinetic term plus a sampled external potential.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    mass: f64,
    potential: Vec<f64>,
}

impl HamiltonianSpec {
    /// Validates mass > 0 and finite potential samples. The potential
    /// vector length must match the grid of any state it is applied to.
    pub fn new(mass: f64, potential: Vec<f64>) -> Result<Self, CoreError> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "mass",
                reason: "must be strictly positive and finite",
                value: mass,
            });
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { what: "potential" });
        }
        Ok(Self { mass, potential })
    }

    /// Free particle: V = 0 everywhere.
    pub fn free(mass: f64, grid: &LatticeGrid) -> Result<Self, CoreError> {
        Self::new(mass, vec![0.0; grid.n_sites()])
    }

    /// Harmonic well V(x) = m omega^2 x^2 / 2 sampled on the grid.
    pub fn harmonic(mass: f64, omega: f64, grid: &LatticeGrid) -> Result<Self, CoreError> {
        if !omega.is_finite() {
            return Err(CoreError::NonFinite { what: "omega" });
        }
        let v = (0..grid.n_sites())
            .map(|i| {
                let x = grid.x(i);
                0.5 * mass * omega * omega * x * x
            })
            .collect();
        Self::new(mass, v)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Stability bound on the step size: dt_max = pi * hbar / E_max with
    /// E_max = hbar^2 k_max^2 / 2m + max|V|. Steps are refused above it.
    pub fn dt_max(&self, grid: &LatticeGrid, hbar: f64) -> f64 {
        let kin = hbar * hbar * grid.k_max().powi(2) / (2.0 * self.mass);
        let vmax = self
            .potential
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        std::f64::consts::PI * hbar / (kin + vmax)
    }

    fn check_grid(&self, grid: &LatticeGrid) -> Result<(), CoreError> {
        if self.potential.len() != grid.n_sites() {
            return Err(CoreError::GridMismatch);
        }
        Ok(())
    }
}

/// Precomputed phase factors for repeated steps of one fixed dt.
pub(crate) struct SplitStepKernel {
    half_v_phase: Vec<Complex64>,
    kinetic_phase: Vec<Complex64>, // includes the 1/n inverse-FFT factor
    spectral: Spectral,
}

impl SplitStepKernel {
    pub fn new(
        grid: &LatticeGrid,
        h: &HamiltonianSpec,
        hbar: f64,
        dt: f64,
    ) -> Result<Self, CoreError> {
        h.check_grid(grid)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "dt",
                reason: "must be strictly positive and finite",
                value: dt,
            });
        }
        let dt_max = h.dt_max(grid, hbar);
        if dt > dt_max {
            return Err(CoreError::UnstableDt { dt, dt_max });
        }
        let n = grid.n_sites();
        let half_v_phase = h
            .potential()
            .iter()
            .map(|v| Complex64::new(0.0, -v * dt / (2.0 * hbar)).exp())
            .collect();
        let inv_n = 1.0 / n as f64;
        let kinetic_phase = grid
            .wavenumbers()
            .iter()
            .map(|k| Complex64::new(0.0, -hbar * k * k * dt / (2.0 * h.mass())).exp() * inv_n)
            .collect();
        Ok(Self {
            half_v_phase,
            kinetic_phase,
            spectral: Spectral::new(n),
        })
    }

    /// Applies one Strang step in place.
    pub fn apply(&mut self, buf: &mut [Complex64]) {
        for (a, p) in buf.iter_mut().zip(&self.half_v_phase) {
            *a *= p;
        }
        self.spectral.forward(buf);
        for (a, p) in buf.iter_mut().zip(&self.kinetic_phase) {
            *a *= p;
        }
        // the 1/n inverse factor is already folded into kinetic_phase
        self.spectral.inverse_raw(buf);
        for (a, p) in buf.iter_mut().zip(&self.half_v_phase) {
            *a *= p;
        }
    }

}

/// Advances `psi` by one unitary step of size dt.
///
/// dt must not exceed [`HamiltonianSpec::dt_max`]. The result has the same
/// norm as the input to rounding.
pub fn step_unitary(
    psi: &WaveFunction,
    h: &HamiltonianSpec,
    hbar: f64,
    dt: f64,
) -> Result<WaveFunction, CoreError> {
    let mut kernel = SplitStepKernel::new(psi.grid(), h, hbar, dt)?;
    let mut buf = psi.amplitudes().to_vec();
    kernel.apply(&mut buf);
    WaveFunction::new(*psi.grid(), buf)
}

/// Evolves `psi` over `t_span` using repeated steps of size dt plus one
/// final shorter step that lands exactly on `t_span`.
///
/// When `t_span` is an exact multiple of dt, the step sequence is exactly
/// `t_span/dt` applications of the same kernel, so splitting a span into
/// consecutive sub-spans with aligned boundaries reproduces the identical
/// operation sequence bit for bit.
pub fn evolve_unitary(
    psi: &WaveFunction,
    h: &HamiltonianSpec,
    hbar: f64,
    t_span: f64,
    dt: f64,
) -> Result<WaveFunction, CoreError> {
    if !(t_span >= 0.0) || !t_span.is_finite() {
        return Err(CoreError::InvalidParameter {
            name: "t_span",
            reason: "must be non-negative and finite",
            value: t_span,
        });
    }
    let mut buf = psi.amplitudes().to_vec();
    evolve_in_place(&mut buf, psi.grid(), h, hbar, t_span, dt)?;
    WaveFunction::new(*psi.grid(), buf)
}

/// In-place segment evolution shared by the trajectory drivers.
pub(crate) fn evolve_in_place(
    buf: &mut [Complex64],
    grid: &LatticeGrid,
    h: &HamiltonianSpec,
    hbar: f64,
    t_span: f64,
    dt: f64,
) -> Result<(), CoreError> {
    if t_span <= 0.0 {
        return Ok(());
    }
    let n_full = (t_span / dt + TIME_EPS).floor() as u64;
    let remainder = t_span - n_full as f64 * dt;
    if n_full > 0 {
        let mut kernel = SplitStepKernel::new(grid, h, hbar, dt)?;
        for _ in 0..n_full {
            kernel.apply(buf);
        }
    }
    if remainder > TIME_EPS * dt {
        let mut kernel = SplitStepKernel::new(grid, h, hbar, remainder)?;
        kernel.apply(buf);
    }
    Ok(())
}

/// H|psi>: spectral kinetic term plus pointwise potential.
pub fn apply_hamiltonian(
    psi: &WaveFunction,
    h: &HamiltonianSpec,
    hbar: f64,
) -> Result<WaveFunction, CoreError> {
    h.check_grid(psi.grid())?;
    let grid = psi.grid();
    let n = grid.n_sites();
    let mut sp = Spectral::new(n);
    let mut buf = psi.amplitudes().to_vec();
    sp.forward(&mut buf);
    for (a, k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *a *= hbar * hbar * k * k / (2.0 * h.mass());
    }
    sp.inverse(&mut buf);
    for ((a, v), p) in buf.iter_mut().zip(h.potential()).zip(psi.amplitudes()) {
        *a += v * p;
    }
    WaveFunction::new(*grid, buf)
}

/// <psi|H|psi> / <psi|psi>, for monitoring energy conservation.
pub fn energy_expectation(
    psi: &WaveFunction,
    h: &HamiltonianSpec,
    hbar: f64,
) -> Result<f64, CoreError> {
    let hpsi = apply_hamiltonian(psi, h, hbar)?;
    Ok(psi.inner(&hpsi)?.re / psi.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::make_gaussian_packet;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn grid() -> LatticeGrid {
        LatticeGrid::new(256, 0.1, -12.8).unwrap()
    }

    #[test]
    fn step_preserves_norm() {
        let g = grid();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 2.0, 1.0, 1.0).unwrap();
        let out = step_unitary(&psi, &h, 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(out.norm_squared(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oversized_step_is_refused() {
        let g = grid();
        let h = HamiltonianSpec::free(1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 0.0, 1.0, 0.0).unwrap();
        let dt_max = h.dt_max(&g, 1.0);
        let err = step_unitary(&psi, &h, 1.0, dt_max * 1.01).unwrap_err();
        assert!(matches!(err, CoreError::UnstableDt { .. }));
        assert!(step_unitary(&psi, &h, 1.0, dt_max * 0.99).is_ok());
    }

    #[test]
    fn split_spans_reproduce_full_span_bitwise() {
        let g = grid();
        let h = HamiltonianSpec::free(1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 0.0, 1.0, 1.0).unwrap();
        let dt = 1.0 / 256.0;
        let full = evolve_unitary(&psi, &h, 1.0, 1.0, dt).unwrap();
        let half = evolve_unitary(&psi, &h, 1.0, 0.5, dt).unwrap();
        let again = evolve_unitary(&half, &h, 1.0, 0.5, dt).unwrap();
        assert_eq!(full.amplitudes(), again.amplitudes());
    }

    #[test]
    fn partial_final_step_lands_exactly() {
        let g = grid();
        let h = HamiltonianSpec::free(1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 0.0, 1.0, 2.0).unwrap();
        // 0.1 is not a multiple of 0.0035: final partial step required.
        let out = evolve_unitary(&psi, &h, 1.0, 0.1, 0.0035).unwrap();
        // Free drift <x> = hbar k0 t / m regardless of step segmentation.
        assert_abs_diff_eq!(out.mean_position(), 0.2, epsilon = 1e-6);
    }

    #[test]
    fn time_reversal_by_conjugation_returns_start() {
        let g = grid();
        let h = HamiltonianSpec::harmonic(1.0, 1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 2.0, 1.0, 0.0).unwrap();
        let fwd = evolve_unitary(&psi, &h, 1.0, 0.2, 1e-3).unwrap();
        let back = evolve_unitary(&fwd.conjugate(), &h, 1.0, 0.2, 1e-3).unwrap();
        let fidelity = psi.inner(&back.conjugate()).unwrap().norm();
        assert_abs_diff_eq!(fidelity, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_span_is_identity() {
        let g = grid();
        let h = HamiltonianSpec::free(1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 0.0, 1.0, 0.0).unwrap();
        let out = evolve_unitary(&psi, &h, 1.0, 0.0, 1e-3).unwrap();
        assert_eq!(out.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn energy_expectation_of_boosted_packet() {
        let g = grid();
        let h = HamiltonianSpec::free(1.0, &g).unwrap();
        let psi = make_gaussian_packet(&g, 0.0, 1.0, 2.0).unwrap();
        // <T> = hbar^2 (k0^2 + 1/(4 sigma^2)) / 2m = (4 + 0.25)/2
        let e = energy_expectation(&psi, &h, 1.0).unwrap();
        assert_relative_eq!(e, 2.125, max_relative = 1e-6);
    }
}
