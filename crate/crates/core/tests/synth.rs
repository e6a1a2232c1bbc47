use panelaudit::features::{build_design, FeatureSpec, Task};
use panelaudit::panel::validate_panel;
use panelaudit::synth::{generate_panel, moment_report, CommonTrend, SyntheticSpec, INCOME, LOG_INCOME};
use panelaudit::PanelDataset;

/// Only the AR(1) disturbance varies.
fn pure_ar(rho: f64) -> SyntheticSpec {
    SyntheticSpec {
        n_units: 500,
        n_periods: 20,
        n_groups: 10,
        ar_coefficient: rho,
        unit_effect_sd: 0.0,
        group_effect_sd: 0.0,
        unit_growth_sd: 0.0,
        group_growth_sd: 0.0,
        group_shock_sd: 0.0,
        period_shock_sd: 0.0,
        common_trend: CommonTrend::Rate(0.0),
        break_period: None,
        break_shift: 0.0,
        ..SyntheticSpec::desk()
    }
}

/// Pooled lag-1 autocorrelation of `column` around its overall mean.
fn lag1_autocorrelation(ds: &PanelDataset, column: &str) -> f64 {
    let v = ds.column(column).unwrap();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    let mut cov = 0.0;
    let mut pairs = 0;
    for row in 0..ds.n_rows() {
        if let Some(prev) = ds.find_row(ds.unit_of(row), ds.period(row) - 1) {
            cov += (v[row] - mean) * (v[prev] - mean);
            pairs += 1;
        }
    }
    cov / pairs as f64 / var
}

#[test]
fn independent_disturbance_has_no_autocorrelation() {
    let ds = generate_panel(&pure_ar(0.0), 1).unwrap();
    assert_eq!(ds.n_rows(), 10_000);
    let r = lag1_autocorrelation(&ds, LOG_INCOME);
    assert!(r.abs() < 0.05, "r = {r}");
}

#[test]
fn ar_coefficient_is_recovered() {
    let ds = generate_panel(&pure_ar(0.9), 2).unwrap();
    let r = lag1_autocorrelation(&ds, LOG_INCOME);
    assert!((r - 0.9).abs() < 0.03, "r = {r}");
}

#[test]
fn break_raises_recession_prevalence() {
    let spec = SyntheticSpec {
        n_periods: 15,
        common_trend: CommonTrend::Rate(0.03),
        break_period: Some(10),
        break_shift: -0.04,
        ..SyntheticSpec::desk()
    };
    let m = moment_report(&generate_panel(&spec, 3).unwrap());
    let (before, at) = (m.prevalence_by_period[&9], m.prevalence_by_period[&10]);
    assert!(at - before > 0.3, "prevalence {before} -> {at}");
}

#[test]
fn desk_spec_matches_calibration_targets() {
    let spec = SyntheticSpec::desk();
    let ds = generate_panel(&spec, 7).unwrap();
    let m = moment_report(&ds);
    let prevalence = m.recession_prevalence.unwrap();
    assert!((prevalence - 0.15).abs() <= 0.05, "prevalence {prevalence}");
    let income = m.columns[INCOME].mean;
    assert!((income / spec.income_base - 1.0).abs() < 0.05, "mean income {income}");
    assert!(m.prevalence_by_period.values().all(|p| (0.0..=1.0).contains(p)));
    let report = validate_panel(&ds);
    assert!(report.is_clean() && report.balanced);
}

/// Share of log-income variance explained by group membership.
fn within_group_correlation(ds: &PanelDataset) -> f64 {
    let v = ds.column(LOG_INCOME).unwrap();
    let groups = ds.row_groups().unwrap();
    let k = ds.n_groups();
    let mut sum = vec![0.0; k];
    let mut count = vec![0.0; k];
    for (x, &g) in v.iter().zip(&groups) {
        sum[g] += x;
        count[g] += 1.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let total = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let between: f64 = (0..k).map(|g| count[g] * (sum[g] / count[g] - mean).powi(2)).sum();
    between / total
}

#[test]
fn within_group_correlation_increases_with_group_effect() {
    let icc = |sd: f64| {
        (0..5)
            .map(|seed| {
                let spec = SyntheticSpec {
                    n_units: 200,
                    group_effect_sd: sd,
                    ..SyntheticSpec::desk()
                };
                within_group_correlation(&generate_panel(&spec, seed).unwrap())
            })
            .sum::<f64>()
            / 5.0
    };
    let (low, mid, high) = (icc(0.0), icc(0.25), icc(0.5));
    assert!(low < mid && mid < high, "{low} {mid} {high}");
}

#[test]
fn short_panels_generate_but_cannot_feed_deep_lags() {
    let spec = SyntheticSpec {
        n_units: 10,
        n_periods: 3,
        n_groups: 2,
        break_period: None,
        ..SyntheticSpec::desk()
    };
    let ds = generate_panel(&spec, 0).unwrap();
    assert_eq!(ds.n_rows(), 30);
    let features = FeatureSpec {
        base_predictors: spec.predictor_names(),
        lags: vec![1, 2, 3],
        include_contemporaneous: false,
        include_outcome_lags: false,
        outcome_lag_sources: vec![],
        outcome_column: LOG_INCOME.into(),
        task: Task::Forecasting,
        derivation_tags: Default::default(),
        time_invariant: vec![],
    };
    assert!(build_design(&ds, &features).is_err());
}
