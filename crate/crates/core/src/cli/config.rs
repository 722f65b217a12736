//! Declarative experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::InitialSelector;
use crate::spectral::WindowKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sweep,
    BoundCheck,
    CommutatorCertify,
    HolderEstimate,
    PhiNorms,
}

impl ExperimentKind {
    pub fn needs_model(self) -> bool {
        matches!(self, Self::Sweep | Self::BoundCheck | Self::CommutatorCertify)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub parameters: serde_json::Value,
}

/// Either an explicit list or a geometric ladder of ratio 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    Values(Vec<f64>),
    Ladder { start: f64, end: f64 },
}

impl Default for TauSpec {
    fn default() -> Self {
        Self::Ladder { start: 16.0, end: 1024.0 }
    }
}

impl TauSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Values(v) => v.clone(),
            Self::Ladder { start, end } => crate::rates::tau_ladder(*start, *end),
        }
    }
}

/// Regularization scale per `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaSchedule {
    /// The same `Δ` for every `τ`.
    Fixed(f64),
    /// A list of `Δ` values (commutator certification).
    Values(Vec<f64>),
    /// `Δ = τ^exponent`.
    TauPower(f64),
}

impl Default for DeltaSchedule {
    fn default() -> Self {
        Self::TauPower(-1.0 / 3.0)
    }
}

impl DeltaSchedule {
    pub fn for_tau(&self, tau: f64) -> Vec<f64> {
        match self {
            Self::Fixed(d) => vec![*d],
            Self::Values(v) => v.clone(),
            Self::TauPower(p) => vec![tau.powf(*p)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSource {
    /// Leakage measure of the configured model at scaled time `s`.
    Model { s: f64 },
    /// Synthetic measure with Hölder exponent `alpha` at 0.
    Planted { alpha: f64, atoms: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSpec {
    pub source: MeasureSource,
    pub scales: ScaleRange,
    #[serde(default)]
    pub window: WindowKind,
    #[serde(default)]
    pub anchor: f64,
}

/// Acceptance thresholds; a violated threshold makes the run exit with 2.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub r_squared_min: Option<f64>,
    pub max_distance: Option<f64>,
    pub max_intertwining: Option<f64>,
    pub bound_dominates: Option<bool>,
    pub max_residual_violations: Option<usize>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub tolerance: Option<f64>,
}

fn default_grid_points() -> usize {
    crate::propagation::DEFAULT_SAMPLES
}

fn default_head_drop() -> usize {
    crate::rates::DEFAULT_HEAD_DROP
}

fn default_quadrature_points() -> usize {
    2000
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub tau: TauSpec,
    /// Uniform sample grid on `[0, 1]`, endpoints included.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub delta: DeltaSchedule,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_head_drop")]
    pub head_drop: usize,
    #[serde(default)]
    pub initial: InitialSelector,
    /// Record Kato's intertwining defect in sweeps.
    #[serde(default = "default_true")]
    pub intertwining: bool,
    /// Seeded random instances added to commutator certification.
    #[serde(default)]
    pub random_instances: usize,
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub holder: Option<HolderSpec>,
    #[serde(default, rename = "assert")]
    pub assertions: Option<Assertions>,
}

impl ExperimentConfig {
    /// Parses a config document, reporting the offending field path and
    /// position on failure.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            Error::Config(format!(
                "{origin}: field `{}` (line {}, column {}): {inner}",
                e.path(),
                inner.line(),
                inner.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let config = Self::parse(&text, &path.display().to_string())?;
        Ok((config, text))
    }

    pub fn uses_randomness(&self) -> bool {
        match self.experiment {
            ExperimentKind::CommutatorCertify => self.random_instances > 0,
            ExperimentKind::Sweep | ExperimentKind::BoundCheck => self.initial == InitialSelector::Random,
            ExperimentKind::HolderEstimate | ExperimentKind::PhiNorms => false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.experiment.needs_model() && self.model.is_none() {
            return Err(Error::Config(format!("experiment {:?} requires a `model`", self.experiment)));
        }
        if self.experiment == ExperimentKind::HolderEstimate {
            match &self.holder {
                None => return Err(Error::Config("holder-estimate requires a `holder` block".into())),
                Some(HolderSpec { source: MeasureSource::Model { .. }, .. }) if self.model.is_none() => {
                    return Err(Error::Config("holder source `model` requires a `model`".into()));
                }
                _ => {}
            }
        }
        if self.grid_points < 2 {
            return Err(Error::Config("`grid_points` must be at least 2".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("`workers` must be positive".into()));
        }
        let taus = self.tau.values();
        if taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("`tau` values must be positive".into()));
        }
        Ok(())
    }
}
