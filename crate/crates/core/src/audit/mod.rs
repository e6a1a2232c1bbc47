//! Leakage audit: the model grid over six predictive problems, end-to-end
//! execution of each configuration and summaries of leakage inflation.

mod report;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::learners::{BoostParams, ForestParams, LogisticParams};
use crate::metrics::DEFAULT_THRESHOLD;
use crate::synth::{SyntheticSpec, INCOME_GROWTH, LOG_INCOME, RECESSION};

pub use report::{
    read_results, render_summary, summarize, write_plot_data, write_results, GroupSummary, SummaryReport,
    RESULT_COLUMNS,
};
pub use run::{run_config, run_grid, Metrics, ResultRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    ForecastBinary,
    ForecastContinuous,
    CrossSectionalBinary,
    CrossSectionalContinuous,
    ForecastBinaryBreakYear,
    ForecastContinuousBreakYear,
}

impl ProblemId {
    pub const ALL: [ProblemId; 6] = [
        ProblemId::ForecastBinary,
        ProblemId::ForecastContinuous,
        ProblemId::ForecastBinaryBreakYear,
        ProblemId::ForecastContinuousBreakYear,
        ProblemId::CrossSectionalBinary,
        ProblemId::CrossSectionalContinuous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::ForecastBinary => "forecast_binary",
            ProblemId::ForecastContinuous => "forecast_continuous",
            ProblemId::CrossSectionalBinary => "cross_sectional_binary",
            ProblemId::CrossSectionalContinuous => "cross_sectional_continuous",
            ProblemId::ForecastBinaryBreakYear => "forecast_binary_break_year",
            ProblemId::ForecastContinuousBreakYear => "forecast_continuous_break_year",
        }
    }

    pub fn is_forecast(self) -> bool {
        !matches!(self, ProblemId::CrossSectionalBinary | ProblemId::CrossSectionalContinuous)
    }

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            ProblemId::ForecastBinary | ProblemId::CrossSectionalBinary | ProblemId::ForecastBinaryBreakYear
        )
    }

    pub fn is_break_year(self) -> bool {
        matches!(
            self,
            ProblemId::ForecastBinaryBreakYear | ProblemId::ForecastContinuousBreakYear
        )
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown problem `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ols,
    Logit,
    #[serde(alias = "rforest")]
    RandomForest,
    Gbt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Ols, Algorithm::Logit, Algorithm::RandomForest, Algorithm::Gbt];

    /// Short name used in result files.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ols => "ols",
            Algorithm::Logit => "logit",
            Algorithm::RandomForest => "rforest",
            Algorithm::Gbt => "gbt",
        }
    }

    pub fn supports(self, problem: ProblemId) -> bool {
        match self {
            Algorithm::Ols => !problem.is_binary(),
            Algorithm::Logit => problem.is_binary(),
            Algorithm::RandomForest | Algorithm::Gbt => true,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_forest" => Ok(Algorithm::RandomForest),
            _ => Algorithm::ALL
                .into_iter()
                .find(|a| a.name() == s)
                .ok_or_else(|| invalid(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    ObservationRandom,
    UnitRandom,
    GroupRandom,
    TimeHoldout,
}

impl SplitKind {
    pub const ALL: [SplitKind; 4] = [
        SplitKind::TimeHoldout,
        SplitKind::ObservationRandom,
        SplitKind::UnitRandom,
        SplitKind::GroupRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::ObservationRandom => "random",
            SplitKind::UnitRandom => "unit",
            SplitKind::GroupRandom => "group",
            SplitKind::TimeHoldout => "time",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observation_random" => Ok(SplitKind::ObservationRandom),
            "unit_random" => Ok(SplitKind::UnitRandom),
            "group_random" => Ok(SplitKind::GroupRandom),
            "time_holdout" => Ok(SplitKind::TimeHoldout),
            _ => SplitKind::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .ok_or_else(|| invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub problem: ProblemId,
    pub algorithm: Algorithm,
    pub contemporaneous: bool,
    pub outcome_lags: bool,
    pub split: SplitKind,
    pub adjust_test_size: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn flags(&self) -> LeakageFlags {
        classify_leakage(self.contemporaneous, self.split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageFlags {
    pub temporal_leaked: bool,
    pub cross_sectional_leaked: bool,
}

impl LeakageFlags {
    /// The flag that defines leaked vs clean for a problem.
    pub fn leaked_for(&self, problem: ProblemId) -> bool {
        if problem.is_forecast() {
            self.temporal_leaked
        } else {
            self.cross_sectional_leaked
        }
    }
}

/// Temporal leakage: contemporaneous predictors or any split other than a
/// time holdout. Cross-sectional leakage: any split that is not at the group
/// level.
pub fn classify_leakage(contemporaneous: bool, split: SplitKind) -> LeakageFlags {
    LeakageFlags {
        temporal_leaked: contemporaneous || split != SplitKind::TimeHoldout,
        cross_sectional_leaked: split != SplitKind::GroupRandom,
    }
}

/// Values enumerated on each grid axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub contemporaneous: Vec<bool>,
    pub outcome_lags: Vec<bool>,
    pub splits: Vec<SplitKind>,
    pub adjust_test_size: Vec<bool>,
    pub algorithms: Vec<Algorithm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridProfile {
    /// Time and random splits for forecasting problems, all three random
    /// splits for cross-sectional ones (228 configurations).
    Tables,
    /// Adds unit and group splits to the forecasting problems.
    Full,
}

impl GridAxes {
    pub fn default_for(problem: ProblemId, profile: GridProfile) -> Self {
        let algorithms = vec![Algorithm::Logit, Algorithm::Ols, Algorithm::RandomForest, Algorithm::Gbt];
        if problem.is_forecast() {
            let splits = match profile {
                GridProfile::Tables => vec![SplitKind::TimeHoldout, SplitKind::ObservationRandom],
                GridProfile::Full => SplitKind::ALL.to_vec(),
            };
            GridAxes {
                contemporaneous: vec![true, false],
                outcome_lags: vec![true, false],
                splits,
                adjust_test_size: vec![true, false],
                algorithms,
            }
        } else {
            GridAxes {
                contemporaneous: vec![false],
                outcome_lags: vec![true],
                splits: vec![SplitKind::ObservationRandom, SplitKind::UnitRandom, SplitKind::GroupRandom],
                adjust_test_size: vec![true, false],
                algorithms,
            }
        }
    }
}

/// Cartesian product of `axes` for each problem, skipping algorithms that do
/// not fit the problem's outcome type. Seeds are left at zero; [`run_grid`]
/// derives them.
pub fn enumerate_grid(problems: &[ProblemId], axes: &GridAxes) -> Result<Vec<ModelConfig>> {
    let configs = enumerate_with(problems, |_| axes.clone());
    if configs.is_empty() {
        return Err(invalid("grid is empty"));
    }
    Ok(configs)
}

/// The default grid for `profile` over `problems`.
pub fn default_grid(problems: &[ProblemId], profile: GridProfile) -> Vec<ModelConfig> {
    enumerate_with(problems, |p| GridAxes::default_for(p, profile))
}

fn enumerate_with(problems: &[ProblemId], axes: impl Fn(ProblemId) -> GridAxes) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for &problem in problems {
        let a = axes(problem);
        for &algorithm in a.algorithms.iter().filter(|a| a.supports(problem)) {
            for &contemporaneous in &a.contemporaneous {
                for &outcome_lags in &a.outcome_lags {
                    for &split in &a.splits {
                        for &adjust_test_size in &a.adjust_test_size {
                            out.push(ModelConfig {
                                problem,
                                algorithm,
                                contemporaneous,
                                outcome_lags,
                                split,
                                adjust_test_size,
                                seed: 0,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Data-dependent choices shared by every configuration of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSettings {
    pub base_predictors: Vec<String>,
    /// Outcome-derived columns entered as lags when `outcome_lags` is on.
    pub outcome_lag_sources: Vec<String>,
    pub binary_outcome: String,
    pub continuous_outcome: String,
    #[serde(default = "crate::features::default_lags")]
    pub lags: Vec<usize>,
    /// Periods held out by the time split of the all-period problems.
    #[serde(default = "default_test_periods")]
    pub test_periods: usize,
    /// Test share of the random, unit and group splits.
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    /// Share of units per test period used for the adjusted sizes.
    #[serde(default = "default_fraction")]
    pub adjust_unit_fraction: f64,
    #[serde(default)]
    pub break_period: Option<i64>,
    /// Periods, ending at the break, used by the break-year problems.
    #[serde(default = "default_break_window")]
    pub break_window: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub boost: BoostParams,
    #[serde(default)]
    pub logistic: LogisticParams,
}

fn default_test_periods() -> usize {
    4
}

fn default_fraction() -> f64 {
    0.2
}

fn default_break_window() -> usize {
    7
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl AuditSettings {
    /// Settings matching the columns written by the synthetic generator.
    pub fn for_synthetic(spec: &SyntheticSpec) -> Self {
        Self {
            base_predictors: spec.predictor_names(),
            outcome_lag_sources: vec![INCOME_GROWTH.into(), RECESSION.into(), LOG_INCOME.into()],
            binary_outcome: RECESSION.into(),
            continuous_outcome: LOG_INCOME.into(),
            lags: crate::features::default_lags(),
            test_periods: default_test_periods(),
            test_fraction: default_fraction(),
            adjust_unit_fraction: default_fraction(),
            break_period: spec.break_period,
            break_window: default_break_window(),
            threshold: DEFAULT_THRESHOLD,
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            logistic: LogisticParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.test_periods == 0 {
            return Err(invalid("test_periods must be at least 1"));
        }
        if self.break_window < 2 {
            return Err(invalid("break_window must be at least 2"));
        }
        for f in [self.test_fraction, self.adjust_unit_fraction] {
            if !(f > 0.0 && f < 1.0) {
                return Err(invalid("fractions must lie strictly between 0 and 1"));
            }
        }
        Ok(())
    }
}
