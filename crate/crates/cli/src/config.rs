//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spectrolab::grid::{build_torus, CoefficientSpec, Grid};
use spectrolab::sets::SetSpec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Spectrum,
    Specineq,
    Propagation,
    Sobolev,
    ControlHum,
    ControlLr,
    ControlImpulsive,
    Obster,
    Sets,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Specineq => "specineq",
            ExperimentKind::Propagation => "propagation",
            ExperimentKind::Sobolev => "sobolev",
            ExperimentKind::ControlHum => "control-hum",
            ExperimentKind::ControlLr => "control-lr",
            ExperimentKind::ControlImpulsive => "control-impulsive",
            ExperimentKind::Obster => "obster",
            ExperimentKind::Sets => "sets",
        }
    }

    /// The subcommand that runs this kind.
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentKind::ControlHum | ExperimentKind::ControlLr | ExperimentKind::ControlImpulsive => "control",
            other => other.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolutionPolicy {
    #[default]
    Warn,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantConfig {
    #[default]
    L2,
    LinfSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub extent: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub pitch: f64,
    pub radius: f64,
    pub t1: f64,
    pub t2: f64,
}

/// Impulse times (`control-impulsive`) or observation times (`obster`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tau: f64,
    pub count: usize,
    pub d: f64,
    /// First impulse-train time, or the first observation time `s_0`.
    #[serde(default)]
    pub start: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlabConfig {
    pub count: usize,
    pub ratio: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    /// Frequency grid.
    pub mu: Option<Vec<f64>>,
    /// Time horizon.
    pub t: Option<f64>,
    /// Control time set as `[start, end]` pairs.
    pub time_set: Option<Vec<[f64; 2]>>,
    pub quadrature_nodes: Option<usize>,
    pub cells: Option<CellConfig>,
    pub trials: Option<usize>,
    pub steps: Option<usize>,
    pub tolerance: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_frequency: Option<f64>,
    pub schedule: Option<ScheduleConfig>,
    pub slabs: Option<SlabConfig>,
    pub variant: Option<VariantConfig>,
    pub restarts: Option<usize>,
    pub slack: Option<f64>,
    /// Lower bound asserted on fit `R^2`.
    pub min_r_squared: Option<f64>,
    /// Upper bound asserted on the observation-constant stability ratio.
    pub max_stability: Option<f64>,
    /// Hausdorff content order for `sets`.
    pub content_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub domain: DomainConfig,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub set: Option<SetSpec>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub resolution_policy: ResolutionPolicy,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        build_torus(self.domain.dim, self.domain.extent, self.domain.resolution)
            .map_err(|e| invalid("domain", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        let p = &self.parameters;
        use ExperimentKind::*;
        let needs_set = !matches!(self.experiment, Spectrum | Sobolev);
        if needs_set && self.set.is_none() {
            return Err(invalid("set", format!("required for experiment `{}`", self.experiment.name())));
        }
        match self.experiment {
            Spectrum | Sets => {}
            Specineq => {
                let mu = require(&p.mu, "parameters.mu")?;
                if mu.len() < 4 {
                    return Err(invalid("parameters.mu", "need at least 4 frequencies for the fit"));
                }
                if p.variant == Some(VariantConfig::LinfSum) {
                    require(&p.cells, "parameters.cells")?;
                }
            }
            Propagation => {
                require(&p.mu, "parameters.mu")?;
                require(&p.cells, "parameters.cells")?;
            }
            Sobolev => {
                let mu = require(&p.mu, "parameters.mu")?;
                if mu.len() < 3 {
                    return Err(invalid("parameters.mu", "need at least 3 frequencies"));
                }
                require(&p.cells, "parameters.cells")?;
            }
            ControlHum => {
                positive(require(&p.t, "parameters.t")?, "parameters.t")?;
                require(&p.time_set, "parameters.time_set")?;
            }
            ControlLr => {
                positive(require(&p.t, "parameters.t")?, "parameters.t")?;
                require(&p.slabs, "parameters.slabs")?;
            }
            ControlImpulsive | Obster => {
                positive(require(&p.t, "parameters.t")?, "parameters.t")?;
                require(&p.schedule, "parameters.schedule")?;
            }
        }
        if let Some(mu) = &p.mu {
            if mu.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return Err(invalid("parameters.mu", "frequencies must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Largest frequency the experiment resolves.
    pub fn max_frequency(&self) -> Option<f64> {
        let p = &self.parameters;
        match self.experiment {
            ExperimentKind::ControlLr => {
                p.slabs.as_ref().map(|s| s.mu0 * 2f64.powi(s.count.saturating_sub(1) as i32))
            }
            ExperimentKind::ControlHum | ExperimentKind::ControlImpulsive => p.max_frequency,
            _ => p.mu.as_ref().and_then(|m| m.iter().cloned().reduce(f64::max)),
        }
    }
}

fn require<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T, ConfigError> {
    value.as_ref().ok_or_else(|| invalid(field, "missing"))
}

fn positive(v: &f64, field: &str) -> Result<(), ConfigError> {
    if *v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}
