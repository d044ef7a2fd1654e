//! Run configuration: one structured file covering constants, orbit
//! geometry, grid, correction settings, and execution knobs, with every
//! parameter defaulting to the reference values used throughout.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constants::{ConstantsError, SystemConstants};
use crate::corrector::CorrectionSettings;
use crate::search::GridSpec;
use crate::transfer::OrbitSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("constants: {0}")]
    Constants(#[from] ConstantsError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Raw constants block as it appears in the file; the derived units live in
/// [`SystemConstants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub mu: f64,
    pub lu_km: f64,
    pub period_days: f64,
    pub earth_radius_km: f64,
    pub moon_radius_km: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            mu: 0.012_150_585_6,
            lu_km: 384_400.0,
            period_days: 27.321_582,
            earth_radius_km: 6_378.145,
            moon_radius_km: 1_737.1,
        }
    }
}

impl ConstantsConfig {
    pub fn build(&self) -> Result<SystemConstants, ConstantsError> {
        SystemConstants::new(
            self.mu,
            self.lu_km,
            self.period_days,
            self.earth_radius_km,
            self.moon_radius_km,
        )
    }
}

/// Execution knobs for the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Candidates per checkpoint chunk.
    pub checkpoint_interval: usize,
    /// Optional pre-correction screen on the guess residual norm; absent
    /// means every feasible guess is corrected.
    pub screen_threshold: Option<f64>,
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            workers: 0,
            checkpoint_interval: 2000,
            screen_threshold: None,
            output_dir: "out".into(),
        }
    }
}

/// Integration tolerance applied everywhere trajectories are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub tolerance: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { tolerance: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub constants: ConstantsConfig,
    pub orbit: OrbitSpec,
    pub grid: GridSpec,
    pub correction: CorrectionSettings,
    pub propagation: PropagationConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn system_constants(&self) -> Result<SystemConstants, ConfigError> {
        Ok(self.constants.build()?)
    }

    /// Internal consistency: constants valid, positive altitudes, a
    /// well-formed grid, and correction bounds that contain the grid bounds.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.constants.build()?;
        if self.orbit.earth_altitude_km <= 0.0 || self.orbit.moon_altitude_km <= 0.0 {
            return Err(ConfigError::Invalid("orbit altitudes must be positive".into()));
        }
        if !self.grid.is_valid() {
            return Err(ConfigError::Invalid(
                "grid axes need positive steps and finite bounds".into(),
            ));
        }
        let cs = &self.correction;
        if self.grid.total() > 0 {
            if !(cs.beta_min <= self.grid.beta.min && cs.beta_max >= self.grid.beta.max) {
                return Err(ConfigError::Invalid(
                    "correction beta bounds must contain the grid beta range".into(),
                ));
            }
            if !(cs.tof_min <= self.grid.tof.min && cs.tof_max >= self.grid.tof.max) {
                return Err(ConfigError::Invalid(
                    "correction tof bounds must contain the grid tof range".into(),
                ));
            }
        }
        if cs.acceptance_threshold > crate::catalog::RESIDUAL_LIMIT {
            return Err(ConfigError::Invalid(format!(
                "acceptance_threshold must not exceed the catalog record limit {}",
                crate::catalog::RESIDUAL_LIMIT
            )));
        }
        for (name, v) in [
            ("step_tolerance", cs.step_tolerance),
            ("function_tolerance", cs.function_tolerance),
            ("constraint_tolerance", cs.constraint_tolerance),
            ("acceptance_threshold", cs.acceptance_threshold),
            ("initial_damping", cs.initial_damping),
            ("propagation.tolerance", self.propagation.tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if cs.max_iterations == 0 || cs.max_residual_evals == 0 {
            return Err(ConfigError::Invalid("iteration budgets must be positive".into()));
        }
        if self.run.checkpoint_interval == 0 {
            return Err(ConfigError::Invalid("checkpoint_interval must be positive".into()));
        }
        Ok(())
    }

    /// Hash over the physical model: constants, orbit geometry, integration
    /// tolerance.
    pub fn constants_hash(&self) -> String {
        let c = &self.constants;
        let payload = format!(
            "mu={:.17e};lu={:.17e};period={:.17e};re={:.17e};rm={:.17e};hi={:.17e};hf={:.17e};tol={:.17e}",
            c.mu,
            c.lu_km,
            c.period_days,
            c.earth_radius_km,
            c.moon_radius_km,
            self.orbit.earth_altitude_km,
            self.orbit.moon_altitude_km,
            self.propagation.tolerance,
        );
        hex_digest(&payload)
    }

    /// Hash over everything that decides which solutions a sweep records:
    /// grid, correction settings, screening.
    pub fn run_hash(&self) -> String {
        let g = &self.grid;
        let cs = &self.correction;
        let payload = format!(
            "a=[{:.17e},{:.17e},{:.17e}];b=[{:.17e},{:.17e},{:.17e}];t=[{:.17e},{:.17e},{:.17e}];\
             box=[{:.17e},{:.17e},{:.17e},{:.17e}];tols=[{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}];\
             iters=[{},{}];screen={:?}",
            g.alpha.min,
            g.alpha.max,
            g.alpha.step,
            g.beta.min,
            g.beta.max,
            g.beta.step,
            g.tof.min,
            g.tof.max,
            g.tof.step,
            cs.beta_min,
            cs.beta_max,
            cs.tof_min,
            cs.tof_max,
            cs.step_tolerance,
            cs.function_tolerance,
            cs.constraint_tolerance,
            cs.acceptance_threshold,
            cs.integration_tolerance,
            cs.max_iterations,
            cs.max_residual_evals,
            self.run.screen_threshold,
        );
        hex_digest(&payload)
    }
}

fn hex_digest(payload: &str) -> String {
    let digest = Sha256::digest(payload.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(out, "{byte:02x}").expect("write to string");
    }
    out
}
