//! Natural-unit <-> CGS conversions.
//!
//! Simulations run in natural units hbar = m0 = r_c = 1: lengths in units
//! of the localization length, masses in nucleon masses, and times in the
//! derived unit t_unit = m0 * r_c^2 / hbar. This module maps quantities
//! between that system and CGS for reporting.

/// Reduced Planck constant in erg s (CODATA).
pub const HBAR_CGS: f64 = 1.054_571_817e-27;

/// Nucleon (proton) reference mass in grams (CODATA).
pub const M0_CGS: f64 = 1.672_621_923_69e-24;

/// Conventional localization length in centimeters.
pub const R_C_CGS: f64 = 1e-5;

/// CGS anchors for the natural-unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    pub r_c_cm: f64,
    pub m0_g: f64,
    pub hbar_erg_s: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            r_c_cm: R_C_CGS,
            m0_g: M0_CGS,
            hbar_erg_s: HBAR_CGS,
        }
    }
}

impl UnitSystem {
    /// One natural time unit in seconds: m0 * r_c^2 / hbar.
    pub fn time_unit_s(&self) -> f64 {
        self.m0_g * self.r_c_cm * self.r_c_cm / self.hbar_erg_s
    }

    /// One natural rate unit in s^-1.
    pub fn rate_unit_per_s(&self) -> f64 {
        1.0 / self.time_unit_s()
    }

    pub fn length_to_cm(&self, x_natural: f64) -> f64 {
        x_natural * self.r_c_cm
    }

    pub fn length_from_cm(&self, x_cm: f64) -> f64 {
        x_cm / self.r_c_cm
    }

    pub fn time_to_s(&self, t_natural: f64) -> f64 {
        t_natural * self.time_unit_s()
    }

    pub fn time_from_s(&self, t_s: f64) -> f64 {
        t_s / self.time_unit_s()
    }

    pub fn rate_to_per_s(&self, rate_natural: f64) -> f64 {
        rate_natural / self.time_unit_s()
    }

    /// Converts a laboratory rate in s^-1 to natural units.
    pub fn rate_from_per_s(&self, rate_per_s: f64) -> f64 {
        rate_per_s * self.time_unit_s()
    }

    pub fn mass_to_g(&self, m_natural: f64) -> f64 {
        m_natural * self.m0_g
    }

    pub fn mass_from_g(&self, m_g: f64) -> f64 {
        m_g / self.m0_g
    }
}
