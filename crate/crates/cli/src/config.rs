//! Run configuration file (TOML). Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use panelaudit::audit::{AuditSettings, GridAxes, GridProfile, ProblemId};
use panelaudit::cv::TemporalCv;
use panelaudit::features::FeatureSpec;
use panelaudit::synth::SyntheticSpec;
use panelaudit::{Error, PanelSchema, Result, ValidationPolicy};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory receiving every output file; relative paths resolve
    /// against the config file's directory.
    pub output_dir: PathBuf,
    pub seeds: Seeds,
    pub data: DataSection,
    #[serde(default)]
    pub features: Option<FeatureSpec>,
    #[serde(default)]
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub cv: Option<CvSection>,
    #[serde(default)]
    pub audit: Option<AuditSection>,
}

/// Every seed is explicit; there is no clock-based default.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub cv: u64,
    pub audit: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Panel CSV to load. When absent the panel is generated from `synthetic`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PanelSchema>,
    #[serde(default)]
    pub policy: ValidationPolicy,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    ObservationRandom,
    UnitRandom,
    GroupRandom,
    TimeHoldout,
    Combined,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub method: SplitMethod,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    /// Number of final periods held out by time-based methods.
    #[serde(default = "default_test_periods")]
    pub test_periods: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMethod {
    RandomKfold,
    UnitKfold,
    GroupKfold,
    Temporal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub method: CvMethod,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub temporal: Option<TemporalCv>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    #[serde(default = "default_profile")]
    pub profile: GridProfile,
    #[serde(default = "default_problems")]
    pub problems: Vec<ProblemId>,
    /// Replaces the profile's axes for every problem.
    #[serde(default)]
    pub axes: Option<GridAxes>,
    /// Required for file data; derived from the generator otherwise.
    #[serde(default)]
    pub settings: Option<AuditSettings>,
    /// Overrides the forest size.
    #[serde(default)]
    pub trees: Option<usize>,
}

fn default_fraction() -> f64 {
    0.2
}

fn default_test_periods() -> usize {
    4
}

fn default_k() -> usize {
    5
}

fn default_profile() -> GridProfile {
    GridProfile::Tables
}

fn default_problems() -> Vec<ProblemId> {
    ProblemId::ALL.to_vec()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.output_dir = base.join(&config.output_dir);
        if let Some(p) = &config.data.path {
            config.data.path = Some(base.join(p));
        }
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        let d = &self.data;
        match (&d.path, &d.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter("data: set either `path` or `synthetic`, not both".into()))
            }
            (None, None) => return Err(Error::InvalidParameter("data: one of `path` or `synthetic` is required".into())),
            (Some(_), None) if d.schema.is_none() => {
                return Err(Error::InvalidParameter("data: `schema` is required with `path`".into()))
            }
            _ => {}
        }
        if let Some(spec) = &d.synthetic {
            spec.validate()?;
        }
        Ok(())
    }
}
