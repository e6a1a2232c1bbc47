//! Synthetic balanced panels with autocorrelated income, group-level
//! correlation, common shocks and an optional structural break.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::with_recession_label;
use crate::panel::{PanelDataset, PanelSchema, RawRecord, ValidationPolicy};
use crate::rng::{stream, Rng};

pub const INCOME: &str = "income";
pub const LOG_INCOME: &str = "log_income";
/// Percent change of income from the previous period.
pub const INCOME_GROWTH: &str = "income_growth";
pub const RECESSION: &str = "recession";

/// Common growth path: one rate for every period, or one rate per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommonTrend {
    Rate(f64),
    PerPeriod(Vec<f64>),
}

/// How each predictor co-moves with the income process. Every component is
/// standardized before loading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorLoading {
    /// Current-period income shock.
    pub innovation: f64,
    /// Current AR(1) disturbance.
    pub state: f64,
    /// Linear time index.
    pub trend: f64,
    /// Unit-specific constant, independent of the income effects.
    pub unit: f64,
    /// Group-specific constant, independent of the income effects.
    pub group: f64,
    pub noise_sd: f64,
}

impl Default for PredictorLoading {
    fn default() -> Self {
        Self {
            innovation: 0.6,
            state: 0.5,
            trend: 0.5,
            unit: 1.0,
            group: 1.0,
            noise_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_units: usize,
    pub n_periods: usize,
    pub n_groups: usize,
    pub n_predictors: usize,
    pub income_base: f64,
    pub ar_coefficient: f64,
    /// Log-income level effects.
    pub unit_effect_sd: f64,
    pub group_effect_sd: f64,
    /// Persistent growth differences.
    #[serde(default)]
    pub unit_growth_sd: f64,
    #[serde(default)]
    pub group_growth_sd: f64,
    /// Share of each period's disturbance common to a group.
    #[serde(default)]
    pub group_shock_sd: f64,
    /// Growth shock common to all units in a period.
    #[serde(default)]
    pub period_shock_sd: f64,
    pub common_trend: CommonTrend,
    #[serde(default)]
    pub break_period: Option<i64>,
    #[serde(default)]
    pub break_shift: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub predictor_loading: PredictorLoading,
}

impl SyntheticSpec {
    /// The bundled desk-scale specification.
    pub fn desk() -> Self {
        Self {
            n_units: 300,
            n_periods: 20,
            n_groups: 15,
            n_predictors: 6,
            income_base: 34_089.0,
            ar_coefficient: 0.85,
            unit_effect_sd: 0.2,
            group_effect_sd: 0.25,
            unit_growth_sd: 0.01,
            group_growth_sd: 0.01,
            group_shock_sd: 0.015,
            period_shock_sd: 0.01,
            common_trend: CommonTrend::Rate(0.035),
            break_period: Some(15),
            break_shift: -0.04,
            noise_sd: 0.02,
            predictor_loading: PredictorLoading::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ar_coefficient.abs() < 1.0) {
            return Err(invalid("ar_coefficient must satisfy |rho| < 1"));
        }
        if self.n_periods < 3 {
            return Err(invalid("n_periods must be at least 3"));
        }
        if self.n_groups < 1 || self.n_units < self.n_groups {
            return Err(invalid("need n_units >= n_groups >= 1"));
        }
        if !(self.income_base > 0.0) {
            return Err(invalid("income_base must be positive"));
        }
        let sds = [
            self.unit_effect_sd,
            self.group_effect_sd,
            self.unit_growth_sd,
            self.group_growth_sd,
            self.group_shock_sd,
            self.period_shock_sd,
            self.noise_sd,
            self.predictor_loading.noise_sd,
        ];
        if sds.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("standard deviations must be non-negative"));
        }
        if let CommonTrend::PerPeriod(v) = &self.common_trend {
            if v.len() != self.n_periods {
                return Err(invalid(format!(
                    "per-period trend has {} entries for {} periods",
                    v.len(),
                    self.n_periods
                )));
            }
        }
        if let Some(b) = self.break_period {
            if b < 1 || b > self.n_periods as i64 {
                return Err(invalid("break_period must lie within 1..=n_periods"));
            }
        }
        Ok(())
    }

    fn growth(&self, t: usize) -> f64 {
        match &self.common_trend {
            CommonTrend::Rate(g) => *g,
            CommonTrend::PerPeriod(v) => v[t - 1],
        }
    }

    pub fn predictor_names(&self) -> Vec<String> {
        (1..=self.n_predictors).map(|j| format!("x{j:02}")).collect()
    }

    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            unit_column: "unit".into(),
            group_column: Some("group".into()),
            time_column: "period".into(),
            outcome_columns: vec![INCOME.into(), LOG_INCOME.into(), INCOME_GROWTH.into()],
            predictor_columns: self.predictor_names(),
        }
    }

    /// Schema of the generated file, including the recession label.
    pub fn output_schema(&self) -> PanelSchema {
        let mut s = self.schema();
        s.outcome_columns.push(RECESSION.into());
        s
    }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Simulates periods `0..=T` and returns periods `1..=T`; period 0 only
/// anchors the first recession label and growth value.
pub fn generate_panel(spec: &SyntheticSpec, seed: u64) -> Result<PanelDataset> {
    spec.validate()?;
    let (n, t_max, g_count, k) = (spec.n_units, spec.n_periods, spec.n_groups, spec.n_predictors);
    let rho = spec.ar_coefficient;
    let load = spec.predictor_loading;

    let mut common = stream(seed, 0);
    let group_level: Vec<f64> = (0..g_count).map(|_| spec.group_effect_sd * normal(&mut common)).collect();
    let group_growth: Vec<f64> = (0..g_count).map(|_| spec.group_growth_sd * normal(&mut common)).collect();
    let group_print: Vec<Vec<f64>> = (0..g_count).map(|_| (0..k).map(|_| normal(&mut common)).collect()).collect();
    // shocks[t][g]
    let group_shock: Vec<Vec<f64>> = (0..=t_max)
        .map(|_| (0..g_count).map(|_| spec.group_shock_sd * normal(&mut common)).collect())
        .collect();
    let period_shock: Vec<f64> = (0..=t_max)
        .map(|t| if t == 0 { 0.0 } else { spec.period_shock_sd * normal(&mut common) })
        .collect();

    // Cumulative common component of log income.
    let mut common_level = vec![0.0; t_max + 1];
    for t in 1..=t_max {
        common_level[t] = common_level[t - 1] + spec.growth(t) + period_shock[t];
    }
    let mean_level = common_level.iter().sum::<f64>() / (t_max + 1) as f64;

    let innov_sd = (spec.noise_sd.powi(2) + spec.group_shock_sd.powi(2)).sqrt();
    let shock_sd = (innov_sd.powi(2) + spec.period_shock_sd.powi(2)).sqrt();
    let state_sd = innov_sd / (1.0 - rho * rho).sqrt();
    let level_var = spec.unit_effect_sd.powi(2) + spec.group_effect_sd.powi(2) + state_sd.powi(2);
    let intercept = spec.income_base.ln() - level_var / 2.0;
    let t_center = t_max as f64 / 2.0;
    let t_scale = (t_max as f64 / 2.0).max(1.0);
    let std = |v: f64, sd: f64| if sd > 0.0 { v / sd } else { 0.0 };

    let width = (n.max(1) - 1).to_string().len().max(3);
    let gwidth = (g_count.max(1) - 1).to_string().len().max(2);
    let schema = spec.schema();
    let mut records = Vec::with_capacity(n * (t_max + 1));
    for u in 0..n {
        let mut rng = stream(seed, 1 + u as u64);
        let g = u % g_count;
        let unit_level = spec.unit_effect_sd * normal(&mut rng);
        let unit_growth = spec.unit_growth_sd * normal(&mut rng);
        let unit_print: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mut state = state_sd * normal(&mut rng);
        let mut prev_log = f64::NAN;
        for t in 0..=t_max {
            let innovation = if t == 0 {
                0.0
            } else {
                let e = spec.noise_sd * normal(&mut rng) + group_shock[t][g];
                state = rho * state + e;
                e
            };
            let drift = (unit_growth + group_growth[g]) * (t as f64 - t_center);
            let shifted = spec.break_period.is_some_and(|b| t as i64 >= b);
            let log_income = intercept
                + unit_level
                + group_level[g]
                + common_level[t]
                - mean_level
                + drift
                + if shifted { spec.break_shift } else { 0.0 }
                + state;
            // percent change in levels
            let growth = 100.0 * (log_income - prev_log).exp_m1();
            prev_log = log_income;

            let shock = std(innovation + period_shock[t], shock_sd);
            let z_state = std(state, state_sd);
            let z_time = (t as f64 - t_center) / t_scale;
            let mut values = vec![Some(log_income.exp()), Some(log_income), Some(if t == 0 { 0.0 } else { growth })];
            for j in 0..k {
                let x = load.innovation * shock
                    + load.state * z_state
                    + load.trend * z_time
                    + load.unit * unit_print[j]
                    + load.group * group_print[g][j]
                    + load.noise_sd * normal(&mut rng);
                values.push(Some(x));
            }
            records.push(RawRecord {
                unit: format!("u{u:0width$}"),
                group: Some(format!("g{g:0gwidth$}")),
                period: t as i64,
                values,
                line: 0,
            });
        }
    }
    let full = PanelDataset::from_records(schema, records, ValidationPolicy::Strict)?;
    with_recession_label(&full, INCOME, RECESSION)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMoments {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub columns: BTreeMap<String, ColumnMoments>,
    pub recession_prevalence: Option<f64>,
    pub prevalence_by_period: BTreeMap<i64, f64>,
}

/// Sample mean and standard deviation (n - 1 denominator) of every data
/// column, plus recession prevalence when a `recession` column is present.
pub fn moment_report(ds: &PanelDataset) -> MomentReport {
    let mut columns = BTreeMap::new();
    for name in ds.column_names() {
        let v = ds.column(name).expect("listed column");
        columns.insert(name.to_string(), moments(v));
    }
    let mut prevalence_by_period = BTreeMap::new();
    let recession_prevalence = ds.column(RECESSION).map(|rec| {
        let mut by: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for (row, &v) in rec.iter().enumerate() {
            let e = by.entry(ds.period(row)).or_default();
            e.0 += v;
            e.1 += 1;
        }
        for (p, (s, c)) in by {
            prevalence_by_period.insert(p, s / c as f64);
        }
        rec.iter().sum::<f64>() / rec.len().max(1) as f64
    });
    MomentReport {
        columns,
        recession_prevalence,
        prevalence_by_period,
    }
}

fn moments(v: &[f64]) -> ColumnMoments {
    let n = v.len();
    if n == 0 {
        return ColumnMoments { mean: f64::NAN, sd: f64::NAN };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    ColumnMoments { mean, sd }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::validate_panel;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_units: 20,
            n_periods: 6,
            n_groups: 4,
            break_period: Some(4),
            ..SyntheticSpec::desk()
        }
    }

    #[test]
    fn shape_and_validity() {
        let ds = generate_panel(&small(), 7).unwrap();
        assert_eq!(ds.n_rows(), 120);
        assert_eq!(ds.periods(), &[1, 2, 3, 4, 5, 6]);
        assert_eq!(ds.n_groups(), 4);
        let report = validate_panel(&ds);
        assert!(report.is_clean() && report.balanced);
        assert!(ds.column(RECESSION).unwrap().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn deterministic() {
        let a = generate_panel(&small(), 3).unwrap();
        let b = generate_panel(&small(), 3).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_ne!(a, generate_panel(&small(), 4).unwrap());
    }

    #[test]
    fn label_matches_income_drop() {
        let ds = generate_panel(&small(), 1).unwrap();
        let growth = ds.column(INCOME_GROWTH).unwrap();
        let rec = ds.column(RECESSION).unwrap();
        for (g, r) in growth.iter().zip(rec) {
            assert_eq!(*r == 1.0, *g < 0.0);
        }
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            SyntheticSpec { ar_coefficient: 1.0, ..small() },
            SyntheticSpec { n_periods: 2, ..small() },
            SyntheticSpec { n_groups: 0, ..small() },
            SyntheticSpec { n_groups: 21, ..small() },
            SyntheticSpec { break_period: Some(9), ..small() },
            SyntheticSpec { common_trend: CommonTrend::PerPeriod(vec![0.1]), ..small() },
        ] {
            assert!(generate_panel(&bad, 0).is_err());
        }
    }

    #[test]
    fn constant_column_sd_zero() {
        let m = moments(&[2.0, 2.0, 2.0]);
        assert_eq!((m.mean, m.sd), (2.0, 0.0));
    }
}
