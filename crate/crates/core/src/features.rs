//! Design-matrix construction with declared lag structure, the recession
//! label, and a linter for feature plans that leak the outcome.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::panel::{ColumnRole, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Predict future periods of the same units.
    Forecasting,
    /// Predict other units.
    CrossSectional,
}

/// How a column was derived from its source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    Growth,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derivation {
    pub source: String,
    pub transform: Transform,
}

/// Declarative feature plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub base_predictors: Vec<String>,
    #[serde(default = "default_lags")]
    pub lags: Vec<usize>,
    #[serde(default)]
    pub include_contemporaneous: bool,
    #[serde(default)]
    pub include_outcome_lags: bool,
    #[serde(default)]
    pub outcome_lag_sources: Vec<String>,
    pub outcome_column: String,
    pub task: Task,
    #[serde(default)]
    pub derivation_tags: BTreeMap<String, Derivation>,
    /// Columns constant within unit; exempt from the contemporaneous rule.
    #[serde(default)]
    pub time_invariant: Vec<String>,
}

pub fn default_lags() -> Vec<usize> {
    vec![1, 2]
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lags.contains(&0) {
            return Err(invalid("lags must be at least 1; use include_contemporaneous for offset 0"));
        }
        if self.lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("lags must be strictly ascending"));
        }
        if self.base_predictors.contains(&self.outcome_column) {
            return Err(invalid(format!(
                "outcome column `{}` cannot be a base predictor",
                self.outcome_column
            )));
        }
        if self.lags.is_empty() && (!self.include_contemporaneous || self.base_predictors.is_empty()) {
            return Err(invalid("feature plan produces no columns"));
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    /// Expected number of design columns.
    pub fn n_columns(&self) -> usize {
        let p = self.base_predictors.len();
        let mut n = p * self.lags.len();
        if self.include_contemporaneous {
            n += p;
        }
        if self.include_outcome_lags {
            n += self.outcome_lag_sources.len() * self.lags.len();
        }
        n
    }
}

/// Provenance of one design column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub source: String,
    /// Periods back from the row's own period; 0 is contemporaneous.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Index of each design row in the source dataset.
    pub source_rows: Vec<usize>,
    pub row_keys: Vec<(String, i64)>,
    pub column_meta: Vec<ColumnMeta>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Writes provenance lines (`#column,<name>,<source>,<offset>`), a header
    /// and the data rows.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        for m in &self.column_meta {
            writeln!(writer, "#column,{},{},{}", m.name, m.source, m.offset)?;
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["row_key".to_string(), "y".to_string()];
        header.extend(self.column_meta.iter().map(|m| m.name.clone()));
        w.write_record(&header)?;
        for (i, (unit, period)) in self.row_keys.iter().enumerate() {
            let mut rec = vec![format!("{unit}@{period}"), format!("{}", self.y[i])];
            rec.extend(self.x.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn column_plan(spec: &FeatureSpec) -> Vec<ColumnMeta> {
    let mut cols = Vec::with_capacity(spec.n_columns());
    for c in &spec.base_predictors {
        if spec.include_contemporaneous {
            cols.push(ColumnMeta {
                name: c.clone(),
                source: c.clone(),
                offset: 0,
            });
        }
        for &k in &spec.lags {
            cols.push(ColumnMeta {
                name: format!("{c}_lag{k}"),
                source: c.clone(),
                offset: k,
            });
        }
    }
    if spec.include_outcome_lags {
        for c in &spec.outcome_lag_sources {
            for &k in &spec.lags {
                cols.push(ColumnMeta {
                    name: format!("{c}_lag{k}"),
                    source: c.clone(),
                    offset: k,
                });
            }
        }
    }
    cols
}

/// Materializes the design matrix. A row survives only if its unit has a
/// row at every lagged period it needs.
pub fn build_design(ds: &PanelDataset, spec: &FeatureSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let y_col = ds.require_column(&spec.outcome_column)?;
    let meta = column_plan(spec);
    let sources: Vec<&[f64]> = meta
        .iter()
        .map(|m| ds.require_column(&m.source))
        .collect::<Result<_>>()?;

    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut source_rows = Vec::new();
    let mut row_keys = Vec::new();
    let mut lag_rows = vec![0usize; spec.lags.len()];
    'rows: for row in 0..ds.n_rows() {
        let (u, t) = (ds.unit_of(row), ds.period(row));
        for (slot, &k) in lag_rows.iter_mut().zip(&spec.lags) {
            match ds.find_row(u, t - k as i64) {
                Some(r) => *slot = r,
                None => continue 'rows,
            }
        }
        for (m, src) in meta.iter().zip(&sources) {
            let r = if m.offset == 0 {
                row
            } else {
                let li = spec.lags.iter().position(|&k| k == m.offset).expect("planned lag");
                lag_rows[li]
            };
            data.push(src[r]);
        }
        y.push(y_col[row]);
        source_rows.push(row);
        row_keys.push((ds.unit_id(row).to_string(), t));
    }
    if y.is_empty() {
        return Err(Error::Contract(format!(
            "every row was trimmed: no unit has {} periods of history",
            spec.max_lag()
        )));
    }
    let x = Matrix::from_vec(y.len(), meta.len(), data)?;
    Ok(DesignMatrix {
        x,
        y,
        source_rows,
        row_keys,
        column_meta: meta,
    })
}

/// Binary indicator of a fall in `income` from the unit's previous period.
/// `None` where the previous period is not observed.
pub fn make_recession_label(ds: &PanelDataset, income_column: &str) -> Result<Vec<Option<f64>>> {
    let income = ds.require_column(income_column)?;
    if let Some(row) = income.iter().position(|&v| v <= 0.0) {
        return Err(invalid(format!(
            "income must be strictly positive; found {} at {}",
            income[row],
            ds.row_key(row)
        )));
    }
    Ok((0..ds.n_rows())
        .map(|row| {
            ds.find_row(ds.unit_of(row), ds.period(row) - 1)
                .map(|prev| if income[row] < income[prev] { 1.0 } else { 0.0 })
        })
        .collect())
}

/// Adds the recession label as an outcome column, dropping rows where it is
/// undefined (each unit's first period).
pub fn with_recession_label(ds: &PanelDataset, income_column: &str, name: &str) -> Result<PanelDataset> {
    let label = make_recession_label(ds, income_column)?;
    let keep: Vec<usize> = label
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|_| i))
        .collect();
    let values: Vec<f64> = label.into_iter().flatten().collect();
    ds.select_rows(&keep)?.with_column(name, values, ColumnRole::Outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub severity: Severity,
    pub rule: &'static str,
    pub column: String,
    pub message: String,
}

impl std::fmt::Display for LintFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}] {}: {}", self.rule, self.column, self.message)
    }
}

pub const RULE_CONTEMPORANEOUS: &str = "contemporaneous-in-forecast";
pub const RULE_DERIVATION: &str = "outcome-derivation";
pub const RULE_OUTCOME_LAGS: &str = "missing-outcome-lags";
pub const RULE_ZERO_LAG: &str = "zero-lag-in-forecast";

/// Checks a feature plan against the panel leakage rules. Errors are
/// prohibitions; warnings are recommendations.
pub fn lint_features(spec: &FeatureSpec) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    let forecasting = spec.task == Task::Forecasting;

    if forecasting && spec.include_contemporaneous {
        let offending: Vec<&str> = spec
            .base_predictors
            .iter()
            .filter(|c| !spec.time_invariant.contains(c))
            .map(String::as_str)
            .collect();
        if !offending.is_empty() {
            findings.push(LintFinding {
                severity: Severity::Error,
                rule: RULE_CONTEMPORANEOUS,
                column: offending.join(","),
                message: "forecasting predictors must be measured at t-1 or earlier".into(),
            });
        }
    }

    // Columns that enter at offset 0.
    let mut at_offset_zero: Vec<&String> = Vec::new();
    if spec.include_contemporaneous || spec.lags.contains(&0) {
        at_offset_zero.extend(spec.base_predictors.iter());
        if spec.include_outcome_lags && spec.lags.contains(&0) {
            at_offset_zero.extend(spec.outcome_lag_sources.iter());
        }
    }
    for c in at_offset_zero {
        let derived = *c == spec.outcome_column
            || spec.derivation_tags.get(c).is_some_and(|d| {
                d.source == spec.outcome_column
                    && matches!(d.transform, Transform::Identity | Transform::Log | Transform::Growth)
            });
        if derived {
            findings.push(LintFinding {
                severity: Severity::Error,
                rule: RULE_DERIVATION,
                column: c.clone(),
                message: format!(
                    "`{c}` is a direct transformation of the outcome `{}` at the same period",
                    spec.outcome_column
                ),
            });
        }
    }

    if forecasting && !spec.include_outcome_lags {
        findings.push(LintFinding {
            severity: Severity::Warning,
            rule: RULE_OUTCOME_LAGS,
            column: spec.outcome_column.clone(),
            message: "lagged outcomes usually improve forecasts".into(),
        });
    }

    if forecasting && spec.lags.contains(&0) {
        findings.push(LintFinding {
            severity: Severity::Warning,
            rule: RULE_ZERO_LAG,
            column: "lags".into(),
            message: "lag 0 is contemporaneous".into(),
        });
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{PanelSchema, RawRecord, ValidationPolicy};
    use crate::testutil::panel;

    fn spec() -> FeatureSpec {
        FeatureSpec {
            base_predictors: vec!["x".into()],
            lags: vec![1, 2],
            include_contemporaneous: false,
            include_outcome_lags: true,
            outcome_lag_sources: vec!["y".into()],
            outcome_column: "y".into(),
            task: Task::Forecasting,
            derivation_tags: BTreeMap::new(),
            time_invariant: vec![],
        }
    }

    fn series(values: &[f64]) -> PanelDataset {
        let schema = PanelSchema {
            unit_column: "unit".into(),
            group_column: None,
            time_column: "t".into(),
            outcome_columns: vec!["y".into()],
            predictor_columns: vec!["x".into()],
        };
        let records = values
            .iter()
            .enumerate()
            .map(|(i, &v)| RawRecord {
                unit: "a".into(),
                group: None,
                period: i as i64 + 1,
                values: vec![Some(v), Some(0.0)],
                line: 0,
            })
            .collect();
        PanelDataset::from_records(schema, records, ValidationPolicy::Strict).unwrap()
    }

    #[test]
    fn single_unit_lag_one() {
        let ds = series(&[1.0, 2.0, 3.0]);
        let s = FeatureSpec {
            base_predictors: vec![],
            lags: vec![1],
            ..spec()
        };
        let d = build_design(&ds, &s).unwrap();
        assert_eq!(d.y, vec![2.0, 3.0]);
        assert_eq!(d.x.column(0), vec![1.0, 2.0]);
        assert_eq!(d.column_meta[0].name, "y_lag1");
        assert_eq!(d.row_keys[0], ("a".to_string(), 2));
    }

    #[test]
    fn trimming_and_column_count() {
        let ds = panel(4, 6, 2);
        let d = build_design(&ds, &spec()).unwrap();
        assert_eq!(d.n_rows(), 4 * (6 - 2));
        assert_eq!(d.x.ncols(), spec().n_columns());
        assert!(d.row_keys.iter().all(|(_, p)| *p >= 3));
        assert!(d.column_meta.iter().all(|m| m.offset > 0));

        let with_contemp = FeatureSpec {
            include_contemporaneous: true,
            ..spec()
        };
        let d = build_design(&ds, &with_contemp).unwrap();
        assert_eq!(d.x.ncols(), 5);
        assert_eq!(d.column_meta.iter().filter(|m| m.offset == 0).count(), 1);
    }

    #[test]
    fn gap_drops_dependent_rows_only() {
        let ds = panel(2, 6, 1);
        let keep: Vec<usize> = (0..ds.n_rows()).filter(|&r| !(ds.unit_of(r) == 0 && ds.period(r) == 3)).collect();
        let gappy = ds.select_rows(&keep).unwrap();
        let d = build_design(&gappy, &spec()).unwrap();
        let u0: Vec<i64> = d.row_keys.iter().filter(|(u, _)| u == "u000").map(|(_, p)| *p).collect();
        assert_eq!(u0, vec![6]);
        assert_eq!(d.row_keys.iter().filter(|(u, _)| u == "u001").count(), 4);
    }

    #[test]
    fn build_errors() {
        let ds = panel(2, 2, 1);
        assert!(matches!(build_design(&ds, &spec()), Err(Error::Contract(_))));
        let missing = FeatureSpec {
            base_predictors: vec!["nope".into()],
            ..spec()
        };
        assert!(matches!(build_design(&panel(2, 5, 1), &missing), Err(Error::ColumnNotFound(_))));
        let zero = FeatureSpec {
            lags: vec![0, 1],
            ..spec()
        };
        assert!(build_design(&panel(2, 5, 1), &zero).is_err());
        let outcome_pred = FeatureSpec {
            base_predictors: vec!["y".into()],
            ..spec()
        };
        assert!(build_design(&panel(2, 5, 1), &outcome_pred).is_err());
    }

    #[test]
    fn recession_label() {
        let ds = series(&[100.0, 90.0, 95.0]);
        assert_eq!(make_recession_label(&ds, "y").unwrap(), vec![None, Some(1.0), Some(0.0)]);
        let up = series(&[1.0, 2.0, 3.0, 4.0]);
        let l = make_recession_label(&up, "y").unwrap();
        assert!(l[1..].iter().all(|v| *v == Some(0.0)));
        assert!(make_recession_label(&series(&[1.0, 0.0]), "y").is_err());

        let labelled = with_recession_label(&ds, "y", "recession").unwrap();
        assert_eq!(labelled.n_rows(), 2);
        assert_eq!(labelled.column("recession").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn lint_compliant_spec_is_clean() {
        assert!(lint_features(&spec()).is_empty());
    }

    #[test]
    fn lint_contemporaneous_forecast() {
        let s = FeatureSpec {
            base_predictors: vec!["a".into(), "b".into()],
            include_contemporaneous: true,
            ..spec()
        };
        let f = lint_features(&s);
        let errors: Vec<_> = f.iter().filter(|f| f.severity == Severity::Error).collect();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].rule, RULE_CONTEMPORANEOUS);
    }

    #[test]
    fn lint_time_invariant_exempt() {
        let s = FeatureSpec {
            base_predictors: vec!["area".into()],
            include_contemporaneous: true,
            time_invariant: vec!["area".into()],
            ..spec()
        };
        assert!(lint_features(&s).is_empty());
    }

    #[test]
    fn lint_log_outcome_cross_sectional() {
        let mut tags = BTreeMap::new();
        tags.insert(
            "log_gdp".to_string(),
            Derivation {
                source: "gdp".into(),
                transform: Transform::Log,
            },
        );
        let s = FeatureSpec {
            base_predictors: vec!["log_gdp".into(), "pop".into()],
            include_contemporaneous: true,
            outcome_column: "gdp".into(),
            task: Task::CrossSectional,
            derivation_tags: tags,
            ..spec()
        };
        let f = lint_features(&s);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::Error);
        assert_eq!(f[0].rule, RULE_DERIVATION);
        assert_eq!(f[0].column, "log_gdp");
    }

    #[test]
    fn lint_warnings() {
        let s = FeatureSpec {
            include_outcome_lags: false,
            lags: vec![0, 1],
            ..spec()
        };
        let rules: Vec<&str> = lint_features(&s).iter().map(|f| f.rule).collect();
        assert!(rules.contains(&RULE_OUTCOME_LAGS));
        assert!(rules.contains(&RULE_ZERO_LAG));
        assert!(lint_features(&s).iter().all(|f| f.severity == Severity::Warning));
    }

    #[test]
    fn csv_export_has_provenance() {
        let ds = series(&[1.0, 2.0, 3.0]);
        let s = FeatureSpec {
            base_predictors: vec![],
            lags: vec![1],
            ..spec()
        };
        let mut buf = Vec::new();
        build_design(&ds, &s).unwrap().write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "#column,y_lag1,y,1\nrow_key,y,y_lag1\na@2,2,1\na@3,3,2\n"
        );
    }
}
