//! Wave functions on the periodic lattice.
//!
//! A state is a complex amplitude per site with the normalization
//! convention sum_i |psi_i|^2 * dx = 1, so |psi_i|^2 is a probability
//! density per unit length. States are immutable value objects: every
//! operation returns a fresh state and leaves its inputs untouched.

use num_complex::Complex64;

use crate::error::CoreError;
use crate::grid::LatticeGrid;

/// Tolerance on |norm^2 - 1| within which a state counts as normalized.
/// Inside this band `normalized` is the exact identity, which makes
/// normalization idempotent to the bit.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Squared-norm floor below which a vector cannot be normalized.
pub const ZERO_NORM_SQ: f64 = 1e-24;

/// Complex wave function sampled on a [`LatticeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: LatticeGrid,
    amplitudes: Vec<Complex64>,
}

impl WaveFunction {
    /// Wraps raw amplitudes, checking length and finiteness. No
    /// normalization is applied.
    pub fn new(grid: LatticeGrid, amplitudes: Vec<Complex64>) -> Result<Self, CoreError> {
        if amplitudes.len() != grid.n_sites() {
            return Err(CoreError::GridMismatch);
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(CoreError::NonFinite { what: "amplitudes" });
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Consumes the state and hands back its amplitude buffer.
    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// sum_i |psi_i|^2 * dx, the discretized L2 norm squared.
    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Returns the state rescaled to unit norm.
    ///
    /// States already within [`NORM_TOLERANCE`] of unit norm are returned
    /// unchanged, so `normalized(normalized(psi)) == normalized(psi)`
    /// bit-for-bit. Fails with `ZeroVector` below [`ZERO_NORM_SQ`].
    pub fn normalized(&self) -> Result<Self, CoreError> {
        let n2 = self.norm_squared();
        if n2 < ZERO_NORM_SQ {
            return Err(CoreError::ZeroVector { norm_sq: n2 });
        }
        if (n2 - 1.0).abs() <= NORM_TOLERANCE {
            return Ok(self.clone());
        }
        let scale = 1.0 / n2.sqrt();
        let amplitudes = self.amplitudes.iter().map(|a| a * scale).collect();
        Ok(Self {
            grid: self.grid,
            amplitudes,
        })
    }

    /// Mass density per unit length, rho_i = mass * |psi_i|^2.
    pub fn mass_density(&self, mass: f64) -> Vec<f64> {
        self.amplitudes.iter().map(|a| mass * a.norm_sqr()).collect()
    }

    /// <psi|phi> = sum_i conj(psi_i) phi_i * dx.
    pub fn inner(&self, other: &Self) -> Result<Complex64, CoreError> {
        if self.grid != other.grid {
            return Err(CoreError::GridMismatch);
        }
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.dx())
    }

    /// <x> computed as a lattice sum over raw site coordinates.
    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| self.grid.x(i) * a.norm_sqr())
            .sum::<f64>()
            * dx
            / self.norm_squared()
    }

    /// Var(x) = <x^2> - <x>^2 over raw site coordinates.
    pub fn position_variance(&self) -> f64 {
        let dx = self.grid.dx();
        let n2 = self.norm_squared();
        let mean = self.mean_position();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let d = self.grid.x(i) - mean;
                d * d * a.norm_sqr()
            })
            .sum::<f64>()
            * dx
            / n2
    }

    /// Probability mass in x < boundary and x >= boundary respectively.
    pub fn lobe_masses(&self, boundary: f64) -> (f64, f64) {
        let dx = self.grid.dx();
        let mut left = 0.0;
        let mut right = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if self.grid.x(i) < boundary {
                left += a.norm_sqr();
            } else {
                right += a.norm_sqr();
            }
        }
        (left * dx, right * dx)
    }

    /// Complex conjugate of the state (time-reversal companion).
    pub fn conjugate(&self) -> Self {
        Self {
            grid: self.grid,
            amplitudes: self.amplitudes.iter().map(|a| a.conj()).collect(),
        }
    }
}

/// Normalized Gaussian packet psi(x) ~ exp(-(x-x0)^2/(4 sigma^2) + i k0 x).
///
/// With this convention |psi|^2 has standard deviation sigma, so
/// Var(x) = sigma^2, and the packet carries mean momentum hbar*k0.
///
/// Preconditions: sigma >= 2*dx so the packet is resolvable, and x0 at
/// least 4 sigma away from both domain edges so truncated tails are
/// negligible at the stated tolerances.
pub fn make_gaussian_packet(
    grid: &LatticeGrid,
    x0: f64,
    sigma: f64,
    k0: f64,
) -> Result<WaveFunction, CoreError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(CoreError::InvalidParameter {
            name: "sigma",
            reason: "must be strictly positive and finite",
            value: sigma,
        });
    }
    let min_sigma = 2.0 * grid.dx();
    if sigma < min_sigma {
        return Err(CoreError::PacketTooNarrow {
            sigma,
            min: min_sigma,
        });
    }
    let lo = grid.x_min() + 4.0 * sigma;
    let hi = grid.x_min() + grid.length() - 4.0 * sigma;
    if !(lo..=hi).contains(&x0) {
        return Err(CoreError::PacketOutsideGrid { x0, lo, hi });
    }
    if !k0.is_finite() {
        return Err(CoreError::NonFinite { what: "k0" });
    }
    let amplitudes: Vec<Complex64> = (0..grid.n_sites())
        .map(|i| {
            let x = grid.x(i);
            let envelope = (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp();
            envelope * Complex64::new(0.0, k0 * x).exp()
        })
        .collect();
    WaveFunction::new(*grid, amplitudes)?.normalized()
}

/// Normalized superposition a*psi1 + b*psi2.
///
/// Fails with `GridMismatch` for states on different lattices and with
/// `ZeroVector` when the combination destructively cancels below the
/// normalization floor.
pub fn superpose(
    a: Complex64,
    psi1: &WaveFunction,
    b: Complex64,
    psi2: &WaveFunction,
) -> Result<WaveFunction, CoreError> {
    if psi1.grid != psi2.grid {
        return Err(CoreError::GridMismatch);
    }
    let amplitudes: Vec<Complex64> = psi1
        .amplitudes
        .iter()
        .zip(&psi2.amplitudes)
        .map(|(p, q)| a * p + b * q)
        .collect();
    WaveFunction::new(psi1.grid, amplitudes)?.normalized()
}
