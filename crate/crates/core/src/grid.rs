//! Uniform periodic 1-D lattice.
//!
//! Positions are x_i = x_min + i*dx for i in 0..n_sites, with periodic
//! boundary conditions of length L = n_sites*dx. All integrals over x are
//! lattice sums weighted by dx; all convolutions are circular.

use crate::error::CoreError;

/// Minimum number of lattice sites for any simulation grid.
pub const MIN_SITES: usize = 8;

/// Uniform periodic lattice: `n_sites` points spaced `dx` starting at `x_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeGrid {
    n_sites: usize,
    dx: f64,
    x_min: f64,
}

impl LatticeGrid {
    /// Builds a grid, validating `n_sites >= 8` and `dx > 0` finite.
    pub fn new(n_sites: usize, dx: f64, x_min: f64) -> Result<Self, CoreError> {
        if n_sites < MIN_SITES {
            return Err(CoreError::GridTooSmall {
                got: n_sites,
                min: MIN_SITES,
            });
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "dx",
                reason: "must be strictly positive and finite",
                value: dx,
            });
        }
        if !x_min.is_finite() {
            return Err(CoreError::NonFinite { what: "x_min" });
        }
        Ok(Self { n_sites, dx, x_min })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    /// Domain length L = n_sites * dx.
    pub fn length(&self) -> f64 {
        self.n_sites as f64 * self.dx
    }

    /// Coordinate of site `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    /// All site coordinates in lattice order.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_sites).map(|i| self.x(i)).collect()
    }

    /// Signed minimal-image offset of site `i` from site 0, in (-L/2, L/2].
    ///
    /// This is the natural argument for tabulating symmetric kernels used in
    /// circular convolution: offsets run 0, dx, .., L/2, -L/2+dx, .., -dx.
    pub fn offset(&self, i: usize) -> f64 {
        if i <= self.n_sites / 2 {
            i as f64 * self.dx
        } else {
            (i as f64 - self.n_sites as f64) * self.dx
        }
    }

    /// Signed minimal-image separation x - y on the periodic domain.
    pub fn wrapped_separation(&self, x: f64, y: f64) -> f64 {
        let l = self.length();
        let mut d = (x - y) % l;
        if d > l / 2.0 {
            d -= l;
        } else if d < -l / 2.0 {
            d += l;
        }
        d
    }

    /// Angular wavenumbers k_j = 2*pi*j/L in FFT order (j, then j - n).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_sites;
        let dk = 2.0 * std::f64::consts::PI / self.length();
        (0..n)
            .map(|j| {
                if j <= n / 2 {
                    j as f64 * dk
                } else {
                    (j as f64 - n as f64) * dk
                }
            })
            .collect()
    }

    /// Largest resolvable wavenumber magnitude, pi/dx.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx
    }

    /// Index of the site nearest to coordinate `x` (periodic).
    pub fn nearest_site(&self, x: f64) -> usize {
        let n = self.n_sites as i64;
        let raw = ((x - self.x_min) / self.dx).round() as i64;
        raw.rem_euclid(n) as usize
    }
}
