//! Numerical laboratory for dynamical wave-function collapse on a 1-D
//! lattice.
//!
//! Two unravelings of the same localization physics are implemented and
//! kept mutually calibrated:
//!
//! * discrete Gaussian hits at Poisson times ([`grw`]), and
//! * a continuous Ito diffusion driven by mass-density-coupled white noise
//!   ([`csl`]),
//!
//! together with a norm-preserving split-step unitary propagator
//! ([`propagator`]), closed-form statistical oracles and ensemble reducers
//! ([`observables`]), and a deterministic per-trajectory random-stream
//! derivation ([`rng`]) that makes ensemble results independent of worker
//! scheduling.
//!
//! All dynamical quantities use the lattice conventions of [`grid`] and
//! [`state`]: integrals are sums weighted by dx, convolutions are circular,
//! and kernels are normalized on the lattice itself so completeness
//! relations hold to rounding rather than to discretization error.

pub mod csl;
pub mod error;
mod fft;
pub mod grid;
pub mod grw;
pub mod observables;
pub mod params;
pub mod propagator;
pub mod rng;
pub mod state;
pub mod trajectory;
pub mod units;

pub use error::{CoreError, Result};
pub use grid::LatticeGrid;
pub use params::{gamma_from_lambda, gamma_from_lambda_3d, CollapseParams};
pub use propagator::HamiltonianSpec;
pub use state::{make_gaussian_packet, superpose, WaveFunction};
pub use trajectory::{JumpEvent, NormMonitor, ObservablePlan, TrajectoryResult};
