//! Experiment configuration files.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use grw_core::{FiberSpec, FieldRecipe, IntervalSpec, SolverConfig, WarpingFunction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub(crate) fn invalid(path: &str, message: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            path: path.to_string(),
            message: message.to_string(),
        }
    }

    /// JSON path of the offending entry.
    pub fn path(&self) -> String {
        match self {
            ConfigError::Io { path, .. } => path.display().to_string(),
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => path.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Conditions,
    SliceSolve,
    InequalityScan,
    Energy,
    Convergence,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Identities,
        Suite::Conditions,
        Suite::SliceSolve,
        Suite::InequalityScan,
        Suite::Energy,
        Suite::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Conditions => "conditions",
            Suite::SliceSolve => "slice-solve",
            Suite::InequalityScan => "inequality-scan",
            Suite::Energy => "energy",
            Suite::Convergence => "convergence",
        }
    }

    fn needs_fields(self) -> bool {
        self != Suite::Conditions
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spacetime {
    pub warping: WarpingFunction,
    /// Height window for the energy conditions; the warping domain if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<IntervalSpec>,
}

impl Spacetime {
    pub fn window(&self) -> IntervalSpec {
        self.window.unwrap_or_else(|| self.warping.domain())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Smallest acceptable fitted order for identity and convergence series.
    pub identity_order: f64,
    /// Same, for interior norms on the sphere.
    pub sphere_identity_order: f64,
    /// Refinement levels in order studies.
    pub levels: usize,
    /// Largest final oscillation a slice-solve run may report.
    pub oscillation: f64,
    /// `c` in the superharmonicity tolerance `c h^2`.
    pub superharmonic_c: f64,
    /// Scan floor; `1e-3 (h / (2 pi / 128))^2` if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_epsilon: Option<f64>,
    /// Sample points for warping-function conditions.
    pub samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity_order: 1.8,
            sphere_identity_order: 1.5,
            levels: 3,
            oscillation: 1e-6,
            superharmonic_c: 1.0,
            scan_epsilon: None,
            samples: 201,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spacetime: Spacetime,
    pub fiber: FiberSpec,
    #[serde(default)]
    pub fields: Vec<FieldRecipe>,
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Added to the seed of every random field.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.suites.is_empty() {
            return Err(ConfigError::invalid("suites", "at least one suite is required"));
        }
        let mut seen = HashSet::new();
        for (i, s) in self.suites.iter().enumerate() {
            if !seen.insert(*s) {
                return Err(ConfigError::invalid(
                    &format!("suites[{i}]"),
                    format!("{s} listed twice"),
                ));
            }
        }
        self.fiber.build().map_err(|e| ConfigError::invalid("fiber", e))?;
        if let Some(w) = self.spacetime.window {
            if !w.is_subset_of(&self.spacetime.warping.domain()) {
                return Err(ConfigError::invalid(
                    "spacetime.window",
                    format!(
                        "window ({}, {}) is not inside the warping domain ({}, {})",
                        w.lower(),
                        w.upper(),
                        self.spacetime.warping.domain().lower(),
                        self.spacetime.warping.domain().upper()
                    ),
                ));
            }
        }
        for (i, f) in self.fields.iter().enumerate() {
            let path = format!("fields[{i}]");
            let t0 = f.t0();
            if !self.spacetime.warping.domain().contains(t0) {
                return Err(ConfigError::invalid(
                    &path,
                    format!("t0 = {t0} is outside the warping domain"),
                ));
            }
            if !(f.amplitude() >= 0.0 && f.amplitude().is_finite()) {
                return Err(ConfigError::invalid(&path, "amplitude must be finite and non-negative"));
            }
        }
        if let Some(s) = self.suites.iter().find(|s| s.needs_fields()) {
            if self.fields.is_empty() {
                return Err(ConfigError::invalid(
                    "fields",
                    format!("suite {s} needs at least one field"),
                ));
            }
        }
        if self.suites.contains(&Suite::InequalityScan) && self.fields.iter().all(FieldRecipe::is_constant) {
            return Err(ConfigError::invalid(
                "fields",
                "inequality-scan needs a non-constant field",
            ));
        }
        self.solver.validate().map_err(|e| ConfigError::invalid("solver", e))?;
        let t = &self.tolerances;
        if t.levels < 3 {
            return Err(ConfigError::invalid(
                "tolerances.levels",
                "order studies need at least 3 levels",
            ));
        }
        if t.samples < 2 {
            return Err(ConfigError::invalid("tolerances.samples", "at least 2 samples"));
        }
        for (name, v) in [
            ("identity_order", t.identity_order),
            ("sphere_identity_order", t.sphere_identity_order),
            ("oscillation", t.oscillation),
            ("superharmonic_c", t.superharmonic_c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(&format!("tolerances.{name}"), "must be positive"));
            }
        }
        if let Some(e) = t.scan_epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(ConfigError::invalid("tolerances.scan_epsilon", "must be positive"));
            }
        }
        Ok(())
    }

    /// Fields with the run seed folded into random recipes.
    pub fn seeded_fields(&self) -> Vec<FieldRecipe> {
        self.fields
            .iter()
            .map(|f| match f {
                FieldRecipe::RandomBandLimited {
                    t0,
                    amplitude,
                    max_mode,
                    seed,
                } => FieldRecipe::RandomBandLimited {
                    t0: *t0,
                    amplitude: *amplitude,
                    max_mode: *max_mode,
                    seed: seed.wrapping_add(self.seed),
                },
                other => other.clone(),
            })
            .collect()
    }
}
