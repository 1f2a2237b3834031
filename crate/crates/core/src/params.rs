//! Collapse-model parameters and the coupling relations between them.
//!
//! The jump picture is parametrized by a per-nucleon localization rate
//! lambda and a localization length r_c. The continuous picture uses a
//! noise coupling gamma tied to lambda by the white-noise correlator
//! normalization; on a 1-D line the relation is
//!
//!   gamma = lambda * (4 pi r_c^2)^(1/2)
//!
//! and for the conventional 3-D parametrization
//!
//!   gamma_3d = lambda * (4 pi r_c^2)^(3/2).
//!
//! gamma is always derived, never supplied independently, so the two
//! pictures stay mutually calibrated by construction.

use crate::error::CoreError;

/// Noise coupling matched to a jump rate on a 1-D line:
/// gamma = lambda * sqrt(4 pi) * r_c.
pub fn gamma_from_lambda(lambda_rate: f64, r_c: f64) -> f64 {
    lambda_rate * (4.0 * std::f64::consts::PI * r_c * r_c).sqrt()
}

/// 3-D variant gamma = lambda * (4 pi r_c^2)^(3/2), in units of
/// length^3 / time. With lambda = 1e-17 s^-1 and r_c = 1e-5 cm this is
/// about 4.45e-31 cm^3 s^-1.
pub fn gamma_from_lambda_3d(lambda_rate: f64, r_c: f64) -> f64 {
    lambda_rate * (4.0 * std::f64::consts::PI * r_c * r_c).powf(1.5)
}

/// Nucleon count inferred from a composite mass: round(mass / m0), at
/// least 1. Used when a configuration specifies mass but not a count.
pub fn nucleon_count_from_mass(mass: f64, m0: f64) -> u64 {
    ((mass / m0).round() as i64).max(1) as u64
}

/// Parameters of the stochastic localization dynamics.
///
/// `gamma` is computed from `lambda_rate` and `r_c` at construction and
/// cannot be set independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseParams {
    lambda_rate: f64,
    r_c: f64,
    gamma: f64,
    m0: f64,
    n_nucleons: u64,
    hbar: f64,
    mass: f64,
}

impl CollapseParams {
    /// Validates positivity of every dimensional parameter and derives
    /// gamma. `lambda_rate` may be zero (collapse switched off) but not
    /// negative.
    pub fn new(
        lambda_rate: f64,
        r_c: f64,
        m0: f64,
        n_nucleons: u64,
        hbar: f64,
        mass: f64,
    ) -> Result<Self, CoreError> {
        let positive: [(&'static str, f64); 4] =
            [("r_c", r_c), ("m0", m0), ("hbar", hbar), ("mass", mass)];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: "must be strictly positive and finite",
                    value,
                });
            }
        }
        if !(lambda_rate >= 0.0) || !lambda_rate.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "lambda_rate",
                reason: "must be non-negative and finite",
                value: lambda_rate,
            });
        }
        if n_nucleons < 1 {
            return Err(CoreError::InvalidParameter {
                name: "n_nucleons",
                reason: "must be at least 1",
                value: n_nucleons as f64,
            });
        }
        Ok(Self {
            lambda_rate,
            r_c,
            gamma: gamma_from_lambda(lambda_rate, r_c),
            m0,
            n_nucleons,
            hbar,
            mass,
        })
    }

    /// Per-nucleon localization rate.
    pub fn lambda_rate(&self) -> f64 {
        self.lambda_rate
    }

    /// Localization length.
    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    /// Derived noise coupling, gamma = lambda * sqrt(4 pi) * r_c.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Reference (nucleon) mass.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn n_nucleons(&self) -> u64 {
        self.n_nucleons
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Mass carried by the simulated degree of freedom.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Total jump rate of an N-nucleon composite: N * lambda.
    pub fn effective_jump_rate(&self) -> f64 {
        self.n_nucleons as f64 * self.lambda_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_relation_in_natural_units() {
        // lambda = 1, r_c = 1: gamma = sqrt(4 pi) = 3.5449077018...
        assert_relative_eq!(
            gamma_from_lambda(1.0, 1.0),
            3.544_907_701_811_032,
            max_relative = 1e-14
        );
    }

    #[test]
    fn gamma_3d_matches_independent_arithmetic() {
        // Same quantity written as lambda * (4 pi)^(3/2) * r_c^3.
        let lambda = 1e-17;
        let r_c: f64 = 1e-5;
        let independent = lambda * (4.0 * std::f64::consts::PI).powf(1.5) * r_c.powi(3);
        // epsilon = 0 disables the absolute-difference shortcut, which
        // would otherwise accept anything at these tiny magnitudes.
        assert_relative_eq!(
            gamma_from_lambda_3d(lambda, r_c),
            independent,
            epsilon = 0.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            gamma_from_lambda_3d(lambda, r_c),
            4.454_662_397_465_368e-31,
            epsilon = 0.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn params_derive_gamma_and_effective_rate() {
        let p = CollapseParams::new(0.5, 2.0, 1.0, 4, 1.0, 4.0).unwrap();
        assert_relative_eq!(p.gamma(), gamma_from_lambda(0.5, 2.0), max_relative = 1e-15);
        assert_relative_eq!(p.effective_jump_rate(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_lambda_is_allowed_negative_is_not() {
        assert!(CollapseParams::new(0.0, 1.0, 1.0, 1, 1.0, 1.0).is_ok());
        assert!(CollapseParams::new(-1.0, 1.0, 1.0, 1, 1.0, 1.0).is_err());
        assert!(CollapseParams::new(1.0, 0.0, 1.0, 1, 1.0, 1.0).is_err());
        assert!(CollapseParams::new(1.0, 1.0, 1.0, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn nucleon_count_rounds_mass_ratio() {
        assert_eq!(nucleon_count_from_mass(3.7, 1.0), 4);
        assert_eq!(nucleon_count_from_mass(0.2, 1.0), 1);
        assert_eq!(nucleon_count_from_mass(8.0, 1.0), 8);
    }
}
