//! Declarative experiment configuration.
//!
//! Configs are TOML documents validated eagerly at load time: every
//! violated precondition is reported, each naming the offending field and
//! the invariant it breaks, so a bad config fails fast with the complete
//! list rather than one error per attempt.

use collapse_core::observables::TwoLobeBasis;
use collapse_core::params::nucleon_count_from_mass;
use collapse_core::{
    gamma_from_lambda, make_gaussian_packet, superpose, CollapseParams, CoreError,
    HamiltonianSpec, LatticeGrid, ObservablePlan, WaveFunction,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative tolerance for the user-supplied gamma against the derived one.
pub const GAMMA_MATCH_TOLERANCE: f64 = 1e-12;

/// Relative tolerance for sample times landing on diffusion step
/// boundaries; mirrors the trajectory driver's alignment contract.
pub const STEP_ALIGN_TOLERANCE: f64 = 1e-6;

/// Dynamical model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Pure unitary evolution, no collapse noise.
    Schrodinger,
    /// Poisson-timed localization jumps.
    Grw,
    /// Continuous diffusive localization.
    Csl,
}

impl Model {
    /// Lower-case name as written in config files.
    pub fn name(self) -> &'static str {
        match self {
            Model::Schrodinger => "schrodinger",
            Model::Grw => "grw",
            Model::Csl => "csl",
        }
    }
}

/// Periodic lattice specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_sites: usize,
    pub dx: f64,
    pub x_min: f64,
}

/// Initial wave function: a single packet or a two-packet superposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialStateConfig {
    /// Gaussian packet exp(-(x-center)^2 / 4 sigma^2 + i momentum x).
    Gaussian {
        center: f64,
        sigma: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// Normalized weights[0]|left> + weights[1]|right> cat state of two
    /// zero-momentum packets; runs with a cat also report two-lobe
    /// observables in the frozen t = 0 template basis.
    Cat {
        centers: [f64; 2],
        sigma: f64,
        weights: [f64; 2],
    },
}

/// Hamiltonian selection; omit the section entirely for H = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum HamiltonianConfig {
    /// Kinetic term only.
    Free,
    /// Kinetic term plus (1/2) m omega^2 x^2.
    Harmonic { omega: f64 },
}

/// Particle data shared by all models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    /// Mass in nucleon-mass units.
    pub mass: f64,
    /// Constituent nucleon count; defaults to round(mass / m0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_nucleons: Option<u64>,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            n_nucleons: None,
        }
    }
}

/// Collapse-noise parameters; required for grw and csl models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    /// Per-nucleon collapse rate.
    pub lambda_rate: f64,
    /// Localization length.
    pub r_c: f64,
    /// Reference mass; defaults to 1 (natural units).
    #[serde(default = "one")]
    pub m0: f64,
    /// Optional redundant noise strength. Gamma is always derived from
    /// lambda_rate and r_c; a supplied value must match the derived one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// A complete, declarative experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub master_seed: u64,
    pub n_trajectories: usize,
    /// Total simulated time; must equal the last sample time.
    pub t_final: f64,
    /// Integration step.
    pub dt: f64,
    /// Observation times, strictly increasing, starting at >= 0.
    pub sample_times: Vec<f64>,
    /// Planck constant in simulation units.
    #[serde(default = "one")]
    pub hbar: f64,
    pub grid: GridConfig,
    pub initial_state: InitialStateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianConfig>,
    #[serde(default)]
    pub particle: ParticleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse: Option<CollapseConfig>,
}

/// One violated precondition: the offending field and the invariant text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub invariant: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.invariant)
    }
}

/// Config loading failure: either unparseable text or a validated parse
/// with the full list of violations.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses and fully validates a config document.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text)?;
    let violations = config.validate();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Validation(violations))
    }
}

impl ExperimentConfig {
    /// Checks every load-time precondition, returning all violations.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let fail = |v: &mut Vec<Violation>, field: &str, invariant: String| {
            v.push(Violation {
                field: field.to_string(),
                invariant,
            });
        };

        if self.n_trajectories == 0 {
            fail(&mut v, "n_trajectories", "must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            fail(&mut v, "dt", "must be strictly positive and finite".into());
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            fail(&mut v, "t_final", "must be strictly positive and finite".into());
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            fail(&mut v, "hbar", "must be strictly positive and finite".into());
        }
        self.validate_sample_times(&mut v);

        let grid = self.build_grid();
        if let Err(e) = &grid {
            fail(&mut v, "grid", core_invariant(e));
        }
        if !(self.particle.mass > 0.0 && self.particle.mass.is_finite()) {
            fail(
                &mut v,
                "particle.mass",
                "must be strictly positive and finite".into(),
            );
        }
        if self.particle.n_nucleons == Some(0) {
            fail(&mut v, "particle.n_nucleons", "must be at least 1".into());
        }

        if let Ok(grid) = &grid {
            match self.build_initial_state(grid) {
                Err(e) => fail(&mut v, "initial_state", core_invariant(&e)),
                // The frozen analysis templates of a cat run must also be
                // constructible (in particular, non-degenerate).
                Ok(_) => {
                    if let Err(e) = self.build_basis(grid) {
                        fail(&mut v, "initial_state", core_invariant(&e));
                    }
                }
            }
            match self.build_hamiltonian(grid) {
                Err(e) => fail(&mut v, "hamiltonian", core_invariant(&e)),
                Ok(Some(h)) => {
                    // The split-step and Euler integrators both require the
                    // phase advance per step to stay below pi at the grid's
                    // highest representable energy.
                    let dt_max = h.dt_max(grid, self.hbar);
                    if self.dt.is_finite() && self.dt > dt_max {
                        fail(
                            &mut v,
                            "dt",
                            format!(
                                "exceeds the integrator accuracy bound pi hbar / E_max = {dt_max:.6e}"
                            ),
                        );
                    }
                }
                Ok(None) => {}
            }
        }

        self.validate_collapse(&mut v, grid.as_ref().ok());
        v
    }

    fn validate_sample_times(&self, v: &mut Vec<Violation>) {
        let times = &self.sample_times;
        if times.is_empty() {
            v.push(Violation {
                field: "sample_times".into(),
                invariant: "must contain at least one time".into(),
            });
            return;
        }
        let monotone = times.windows(2).all(|w| w[1] > w[0]);
        let finite = times.iter().all(|t| t.is_finite());
        if !finite || !monotone || times[0] < 0.0 {
            v.push(Violation {
                field: "sample_times".into(),
                invariant: "must be finite, non-negative, and strictly increasing".into(),
            });
            return;
        }
        let last = *times.last().expect("non-empty");
        if (last - self.t_final).abs() > 1e-9 * self.t_final.abs().max(1.0) {
            v.push(Violation {
                field: "t_final".into(),
                invariant: format!("must equal the last sample time ({last})"),
            });
        }
        if self.model == Model::Csl && self.dt > 0.0 && self.dt.is_finite() {
            // Diffusion samples only on step boundaries so the noise
            // discretization is uniform; mirror the driver's contract.
            let aligned = times.iter().all(|&t| {
                let steps = (t / self.dt).round();
                (t - steps * self.dt).abs() <= STEP_ALIGN_TOLERANCE * self.dt
            });
            if !aligned {
                v.push(Violation {
                    field: "sample_times".into(),
                    invariant: "every entry must be an integer multiple of dt for model = csl"
                        .into(),
                });
            }
        }
    }

    fn validate_collapse(&self, v: &mut Vec<Violation>, grid: Option<&LatticeGrid>) {
        match (self.model, &self.collapse) {
            (Model::Schrodinger, Some(_)) => v.push(Violation {
                field: "collapse".into(),
                invariant: "section must be absent for model = schrodinger".into(),
            }),
            (Model::Schrodinger, None) => {}
            (_, None) => v.push(Violation {
                field: "collapse".into(),
                invariant: format!("section is required for model = {}", self.model.name()),
            }),
            (_, Some(c)) => {
                if !(c.lambda_rate >= 0.0 && c.lambda_rate.is_finite()) {
                    v.push(Violation {
                        field: "collapse.lambda_rate".into(),
                        invariant: "must be non-negative and finite".into(),
                    });
                }
                if !(c.r_c > 0.0 && c.r_c.is_finite()) {
                    v.push(Violation {
                        field: "collapse.r_c".into(),
                        invariant: "must be strictly positive and finite".into(),
                    });
                } else if let Some(g) = grid {
                    if c.r_c < g.dx() {
                        v.push(Violation {
                            field: "collapse.r_c".into(),
                            invariant: format!(
                                "must be at least one lattice spacing (dx = {}) so the \
                                 localization profile is resolvable",
                                g.dx()
                            ),
                        });
                    }
                }
                if !(c.m0 > 0.0 && c.m0.is_finite()) {
                    v.push(Violation {
                        field: "collapse.m0".into(),
                        invariant: "must be strictly positive and finite".into(),
                    });
                }
                if let Some(gamma) = c.gamma {
                    let derived = gamma_from_lambda(c.lambda_rate, c.r_c);
                    if !(gamma.is_finite()
                        && (gamma - derived).abs()
                            <= GAMMA_MATCH_TOLERANCE * derived.abs().max(f64::MIN_POSITIVE))
                    {
                        v.push(Violation {
                            field: "collapse.gamma".into(),
                            invariant: format!(
                                "gamma is not a free parameter: it must equal \
                                 lambda_rate * sqrt(4 pi) * r_c = {derived:.17e}"
                            ),
                        });
                    }
                }
            }
        }
    }

    /// Lattice described by the grid section.
    pub fn build_grid(&self) -> Result<LatticeGrid, CoreError> {
        LatticeGrid::new(self.grid.n_sites, self.grid.dx, self.grid.x_min)
    }

    /// Normalized initial wave function on `grid`.
    pub fn build_initial_state(&self, grid: &LatticeGrid) -> Result<WaveFunction, CoreError> {
        match &self.initial_state {
            InitialStateConfig::Gaussian {
                center,
                sigma,
                momentum,
            } => make_gaussian_packet(grid, *center, *sigma, *momentum),
            InitialStateConfig::Cat {
                centers,
                sigma,
                weights,
            } => {
                let left = make_gaussian_packet(grid, centers[0], *sigma, 0.0)?;
                let right = make_gaussian_packet(grid, centers[1], *sigma, 0.0)?;
                superpose(
                    Complex64::new(weights[0], 0.0),
                    &left,
                    Complex64::new(weights[1], 0.0),
                    &right,
                )
            }
        }
    }

    /// Two-lobe analysis basis, present exactly when the initial state is a
    /// cat; templates are frozen at t = 0 with the boundary at the packet
    /// midpoint.
    pub fn build_basis(&self, grid: &LatticeGrid) -> Result<Option<TwoLobeBasis>, CoreError> {
        match &self.initial_state {
            InitialStateConfig::Cat { centers, sigma, .. } => Ok(Some(TwoLobeBasis::gaussian_pair(
                grid, centers[0], centers[1], *sigma,
            )?)),
            InitialStateConfig::Gaussian { .. } => Ok(None),
        }
    }

    /// Hamiltonian, or None for H = 0.
    pub fn build_hamiltonian(
        &self,
        grid: &LatticeGrid,
    ) -> Result<Option<HamiltonianSpec>, CoreError> {
        match self.hamiltonian {
            None => Ok(None),
            Some(HamiltonianConfig::Free) => {
                HamiltonianSpec::free(self.particle.mass, grid).map(Some)
            }
            Some(HamiltonianConfig::Harmonic { omega }) => {
                HamiltonianSpec::harmonic(self.particle.mass, omega, grid).map(Some)
            }
        }
    }

    /// Collapse parameters, or None for the noiseless model.
    pub fn build_collapse_params(&self) -> Result<Option<CollapseParams>, CoreError> {
        match &self.collapse {
            None => Ok(None),
            Some(c) => {
                let n = self
                    .particle
                    .n_nucleons
                    .unwrap_or_else(|| nucleon_count_from_mass(self.particle.mass, c.m0))
                    .max(1);
                CollapseParams::new(
                    c.lambda_rate,
                    c.r_c,
                    c.m0,
                    n,
                    self.hbar,
                    self.particle.mass,
                )
                .map(Some)
            }
        }
    }

    /// Observation plan (sample times plus the cat basis when present).
    pub fn build_plan(&self, grid: &LatticeGrid) -> Result<ObservablePlan, CoreError> {
        let plan = ObservablePlan::new(self.sample_times.clone())?;
        Ok(match self.build_basis(grid)? {
            Some(basis) => plan.with_basis(basis),
            None => plan,
        })
    }

    /// Canonical TOML serialization; `load_config` of the result parses to
    /// an equal config.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn core_invariant(e: &CoreError) -> String {
    e.to_string()
}

/// The published schema, printed by the `schema` subcommand.
pub const SCHEMA_TEXT: &str = r#"collapse-sim experiment configuration (TOML)

Top-level keys
  model           "schrodinger" | "grw" | "csl"
  master_seed     integer >= 0; trajectory k draws from an independent
                  ChaCha8 stream keyed by SHA-256(le64(master_seed) || le64(k))
  n_trajectories  integer >= 1
  t_final         float > 0; must equal the last sample time
  dt              float > 0; for model = "csl" every sample time must be an
                  integer multiple of dt; with a hamiltonian section, dt must
                  not exceed pi * hbar / E_max for the grid
  sample_times    array of floats, finite, non-negative, strictly increasing
  hbar            float > 0 (default 1.0)

[grid]
  n_sites         integer >= 8 (periodic lattice)
  dx              float > 0
  x_min           float (left edge; the lattice covers [x_min, x_min + n*dx))

[initial_state]  one of:
  kind = "gaussian"
    center        float (>= 4 sigma from either grid edge)
    sigma         float >= 2 * dx
    momentum      float (default 0.0)
  kind = "cat"
    centers       [float, float] (each >= 4 sigma from the edges)
    sigma         float >= 2 * dx
    weights       [float, float] (relative amplitudes; normalized on load)
  A cat run reports two-lobe observables in the frozen t = 0 template basis
  with the lobe boundary at the midpoint of the two centers.

[hamiltonian]    optional; omit the whole section for H = 0. One of:
  kind = "free"
  kind = "harmonic"
    omega         float > 0

[particle]       optional (defaults: mass = 1.0)
  mass            float > 0, in units of the reference mass m0
  n_nucleons      optional integer >= 1; default round(mass / m0)

[collapse]       required for model = "grw" and "csl"; absent for "schrodinger"
  lambda_rate     float >= 0 (per-nucleon collapse rate)
  r_c             float > 0 and >= dx (localization length)
  m0              float > 0 (default 1.0, reference mass)
  gamma           optional float; never a free parameter. If present it must
                  equal lambda_rate * sqrt(4 pi) * r_c (the derived noise
                  strength); any other value is rejected.

Exit codes: 0 success, 1 validation failure, 2 runtime/numerical failure,
3 verification-suite failure.
"#;
