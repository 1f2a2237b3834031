//! Error type shared by all simulation modules.

use thiserror::Error;

/// Errors raised by grid, state, propagation, and collapse operations.
///
/// Every variant names the violated contract and carries the offending
/// values so callers can report the failure without re-deriving it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid parameter {name}: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    #[error("grid too small: need at least {min} sites, got {got}")]
    GridTooSmall { got: usize, min: usize },

    #[error("packet too narrow: sigma = {sigma} is below the resolvable minimum 2*dx = {min}")]
    PacketTooNarrow { sigma: f64, min: f64 },

    #[error("packet outside grid: x0 = {x0} not within [{lo}, {hi}] (4-sigma clearance)")]
    PacketOutsideGrid { x0: f64, lo: f64, hi: f64 },

    #[error("grid mismatch: operands live on different lattices")]
    GridMismatch,

    #[error("zero vector: norm^2 = {norm_sq} is below 1e-24, cannot normalize")]
    ZeroVector { norm_sq: f64 },

    #[error("non-finite value encountered in {what}")]
    NonFinite { what: &'static str },

    #[error("unstable dt: dt = {dt} exceeds the propagator stability bound dt_max = {dt_max}")]
    UnstableDt { dt: f64, dt_max: f64 },

    #[error(
        "unstable dt: single-step norm correction {correction:.3e} exceeds the limit {limit:.1e}"
    )]
    NormCorrectionExceeded { correction: f64, limit: f64 },

    #[error("collapsed to zero: post-jump norm^2 = {norm_sq:.3e} at center {center}")]
    CollapsedToZero { center: f64, norm_sq: f64 },

    #[error("degenerate lobes: template overlap {overlap:.3e} exceeds 1e-3")]
    DegenerateLobes { overlap: f64 },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("ensemble mismatch: {what}")]
    EnsembleMismatch { what: &'static str },

    #[error("insufficient signal: only {usable} sample times above the noise floor, need {need}")]
    InsufficientSignal { usable: usize, need: usize },
}

/// Convenience alias for results carrying a [`CoreError`].
pub type Result<T, E = CoreError> = std::result::Result<T, E>;
