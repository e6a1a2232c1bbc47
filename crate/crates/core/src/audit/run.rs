use serde::{Deserialize, Serialize};

use super::{AuditSettings, LeakageFlags, ModelConfig, SplitKind};
use crate::error::{invalid, Error, Result};
use crate::features::{build_design, FeatureSpec, Task};
use crate::learners::{fit_gbt, fit_logistic, fit_ols, fit_random_forest, Loss, Objective};
use crate::matrix::Matrix;
use crate::metrics::{classification_report, mse, ClassificationReport, RegressionReport};
use crate::panel::PanelDataset;
use crate::par::{map_indexed, Parallelism};
use crate::rng::{derive_seed, round_half_up};
use crate::split::{
    adjust_sizes, last_periods, restrict_test, split_group_random, split_observation_random, split_time_holdout,
    split_unit_random, Label, SplitAssignment,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metrics {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ModelConfig,
    pub flags: LeakageFlags,
    pub metrics: Option<Metrics>,
    pub train_size: usize,
    pub test_size: usize,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn failed(config: ModelConfig, error: &Error) -> Self {
        Self {
            config,
            flags: config.flags(),
            metrics: None,
            train_size: 0,
            test_size: 0,
            error: Some(error.to_string()),
        }
    }

    pub fn auc(&self) -> Option<f64> {
        match self.metrics {
            Some(Metrics::Classification(c)) => Some(c.auc),
            _ => None,
        }
    }

    pub fn mse(&self) -> Option<f64> {
        match self.metrics {
            Some(Metrics::Regression(r)) => Some(r.mse),
            _ => None,
        }
    }

    /// AUC for classification problems, MSE for regression problems.
    pub fn headline(&self) -> Option<f64> {
        self.auc().or(self.mse())
    }

    pub fn leaked(&self) -> bool {
        self.flags.leaked_for(self.config.problem)
    }
}

fn feature_spec(settings: &AuditSettings, config: &ModelConfig) -> FeatureSpec {
    let problem = config.problem;
    FeatureSpec {
        base_predictors: settings.base_predictors.clone(),
        lags: settings.lags.clone(),
        include_contemporaneous: config.contemporaneous,
        include_outcome_lags: config.outcome_lags,
        outcome_lag_sources: settings.outcome_lag_sources.clone(),
        outcome_column: if problem.is_binary() {
            settings.binary_outcome.clone()
        } else {
            settings.continuous_outcome.clone()
        },
        task: if problem.is_forecast() {
            Task::Forecasting
        } else {
            Task::CrossSectional
        },
        derivation_tags: Default::default(),
        time_invariant: vec![],
    }
}

fn apply_split(sub: &PanelDataset, settings: &AuditSettings, config: &ModelConfig) -> Result<SplitAssignment> {
    let break_period = if config.problem.is_break_year() {
        Some(settings
            .break_period
            .ok_or_else(|| invalid("break-year problems need a break_period"))?)
    } else {
        None
    };
    let seed = config.seed;
    let frac = settings.test_fraction;
    let split = match config.split {
        SplitKind::TimeHoldout => {
            let test = match break_period {
                Some(b) => vec![b],
                None => last_periods(sub, settings.test_periods),
            };
            return split_time_holdout(sub, &test);
        }
        SplitKind::ObservationRandom => split_observation_random(sub, frac, seed)?,
        SplitKind::UnitRandom => split_unit_random(sub, frac, seed)?,
        SplitKind::GroupRandom => split_group_random(sub, frac, seed)?,
    };
    match break_period {
        Some(b) => restrict_test(&split, |row| sub.period(row) == b),
        None => Ok(split),
    }
}

/// Sizes every adjusted configuration of a problem shares: a fixed share
/// of units times the time split's train and test period counts.
fn adjusted_targets(sub: &PanelDataset, settings: &AuditSettings, config: &ModelConfig) -> (usize, usize) {
    let units = sub.n_units();
    let test_units = round_half_up(settings.adjust_unit_fraction * units as f64).clamp(1, units.max(2) - 1);
    let (train_periods, test_periods) = if config.problem.is_break_year() {
        (settings.break_window - 1, 1)
    } else {
        let t = sub.n_periods();
        (t.saturating_sub(settings.test_periods).max(1), settings.test_periods)
    };
    ((units - test_units) * train_periods, test_units * test_periods)
}

fn check_time_order(sub: &PanelDataset, split: &SplitAssignment) -> Result<()> {
    let mut max_train = i64::MIN;
    let mut min_test = i64::MAX;
    for (row, label) in split.labels.iter().enumerate() {
        match label {
            Label::Train => max_train = max_train.max(sub.period(row)),
            Label::Test => min_test = min_test.min(sub.period(row)),
            Label::Excluded => {}
        }
    }
    if max_train >= min_test {
        return Err(Error::Contract(format!(
            "time split trains on period {max_train} but tests from period {min_test}"
        )));
    }
    Ok(())
}

/// Runs one configuration end to end: features, split, optional size
/// adjustment, fit with default hyperparameters, and test-set metrics.
pub fn run_config(ds: &PanelDataset, settings: &AuditSettings, config: &ModelConfig) -> Result<ResultRecord> {
    settings.validate()?;
    let problem = config.problem;
    if !config.algorithm.supports(problem) {
        return Err(invalid(format!("{} cannot fit {}", config.algorithm, problem)));
    }
    let design = build_design(ds, &feature_spec(settings, config))?;

    let keep: Vec<usize> = match (problem.is_break_year(), settings.break_period) {
        (true, Some(b)) => {
            let first = b - settings.break_window as i64 + 1;
            (0..design.n_rows())
                .filter(|&i| (first..=b).contains(&design.row_keys[i].1))
                .collect()
        }
        (true, None) => return Err(invalid("break-year problems need a break_period")),
        (false, _) => (0..design.n_rows()).collect(),
    };
    let source: Vec<usize> = keep.iter().map(|&i| design.source_rows[i]).collect();
    let sub = ds.select_rows(&source)?;
    if sub.n_rows() != keep.len() {
        return Err(Error::Contract("design rows do not map one-to-one onto panel rows".into()));
    }
    let x = design.x.select_rows(&keep);
    let y: Vec<f64> = keep.iter().map(|&i| design.y[i]).collect();

    let mut split = apply_split(&sub, settings, config)?;
    if config.adjust_test_size {
        let (train_target, test_target) = adjusted_targets(&sub, settings, config);
        split = adjust_sizes(
            &split,
            train_target.min(split.train_size),
            test_target.min(split.test_size),
            derive_seed(config.seed, 1),
        )?;
    }
    if problem.is_forecast() && config.split == SplitKind::TimeHoldout {
        check_time_order(&sub, &split)?;
    }

    let train = split.train_rows();
    let test = split.test_rows();
    let x_train = x.select_rows(&train);
    let y_train: Vec<f64> = train.iter().map(|&r| y[r]).collect();
    let x_test = x.select_rows(&test);
    let y_test: Vec<f64> = test.iter().map(|&r| y[r]).collect();

    let predictions = fit_predict(settings, config, &x_train, &y_train, &x_test).map_err(|e| match e {
        Error::RankDeficient(cols) => Error::RankDeficient(
            cols.into_iter()
                .map(|c| {
                    c.strip_prefix('x')
                        .and_then(|i| i.parse::<usize>().ok())
                        .and_then(|i| design.column_meta.get(i))
                        .map_or(c.clone(), |m| m.name.clone())
                })
                .collect(),
        ),
        other => other,
    })?;
    let metrics = if problem.is_binary() {
        Metrics::Classification(classification_report(&predictions, &y_test, settings.threshold)?)
    } else {
        Metrics::Regression(RegressionReport {
            mse: mse(&predictions, &y_test)?,
        })
    };
    Ok(ResultRecord {
        config: *config,
        flags: config.flags(),
        metrics: Some(metrics),
        train_size: split.train_size,
        test_size: split.test_size,
        error: None,
    })
}

fn fit_predict(
    settings: &AuditSettings,
    config: &ModelConfig,
    x_train: &Matrix,
    y_train: &[f64],
    x_test: &Matrix,
) -> Result<Vec<f64>> {
    use super::Algorithm::*;
    let binary = config.problem.is_binary();
    let objective = if binary {
        Objective::Classification
    } else {
        Objective::Regression
    };
    let seed = derive_seed(config.seed, 2);
    match config.algorithm {
        Ols => fit_ols(x_train, y_train)?.predict(x_test),
        Logit => fit_logistic(x_train, y_train, settings.logistic)?.predict(x_test),
        RandomForest => fit_random_forest(x_train, y_train, &settings.forest, seed, objective)?.predict(x_test),
        Gbt => {
            let params = crate::learners::BoostParams {
                loss: if binary { Loss::Logistic } else { Loss::Squared },
                ..settings.boost
            };
            fit_gbt(x_train, y_train, &params, seed)?.predict(x_test)
        }
    }
}

/// Runs every configuration with seeds derived from `master_seed` and the
/// configuration's position. Failures become error records. Output order
/// and content do not depend on `parallelism`.
pub fn run_grid(
    ds: &PanelDataset,
    settings: &AuditSettings,
    configs: &[ModelConfig],
    parallelism: Parallelism,
    master_seed: u64,
) -> Vec<ResultRecord> {
    let mut inner = settings.clone();
    if !parallelism.is_sequential() {
        inner.forest.parallelism = Parallelism::Sequential;
    }
    map_indexed(configs.len(), parallelism, |i| {
        let config = ModelConfig {
            seed: derive_seed(master_seed, i as u64),
            ..configs[i]
        };
        run_config(ds, &inner, &config).unwrap_or_else(|e| ResultRecord::failed(config, &e))
    })
}
