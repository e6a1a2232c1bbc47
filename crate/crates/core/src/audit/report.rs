use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::run::{Metrics, ResultRecord};
use super::{classify_leakage, Algorithm, LeakageFlags, ModelConfig, ProblemId, SplitKind};
use crate::error::{invalid, Error, Result};
use crate::metrics::{leakage_ratio, ClassificationReport, Orientation, RegressionReport};

pub const RESULT_COLUMNS: [&str; 16] = [
    "problem",
    "model",
    "contemporaneous",
    "outcome_lags",
    "split_type",
    "auc",
    "mse",
    "adj_test_size",
    "sensitivity",
    "specificity",
    "train_size",
    "test_size",
    "temporal_leaked",
    "cross_sectional_leaked",
    "seed",
    "error",
];

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn parse_yes_no(s: &str, row: usize, column: &str) -> Result<bool> {
    match s {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(Error::Parse {
            row,
            column: column.into(),
            message: format!("expected yes/no, got `{s}`"),
        }),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes one row per record: configuration, metrics and sizes, then flag, seed
/// and error columns.
pub fn write_results<W: Write>(records: &[ResultRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_COLUMNS)?;
    for r in records {
        let c = &r.config;
        let (sens, spec) = match r.metrics {
            Some(Metrics::Classification(m)) => (Some(m.sensitivity), Some(m.specificity)),
            _ => (None, None),
        };
        w.write_record([
            c.problem.name().to_string(),
            c.algorithm.name().to_string(),
            yes_no(c.contemporaneous).to_string(),
            yes_no(c.outcome_lags).to_string(),
            c.split.name().to_string(),
            opt(r.auc()),
            opt(r.mse()),
            yes_no(c.adjust_test_size).to_string(),
            opt(sens),
            opt(spec),
            r.train_size.to_string(),
            r.test_size.to_string(),
            yes_no(r.flags.temporal_leaked).to_string(),
            yes_no(r.flags.cross_sectional_leaked).to_string(),
            c.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_results`]. Flags are recomputed from the
/// configuration and must agree with the stored ones.
pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    for col in RESULT_COLUMNS {
        if !index.contains_key(col) {
            return Err(Error::Schema(format!("result file lacks column `{col}`")));
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let get = |c: &str| rec.get(index[c]).unwrap_or("").trim();
        let parse_f = |c: &str| -> Result<Option<f64>> {
            let s = get(c);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                row,
                column: c.into(),
                message: e.to_string(),
            })
        };
        let parse_u = |c: &str| -> Result<u64> {
            get(c).parse::<u64>().map_err(|e| Error::Parse {
                row,
                column: c.into(),
                message: e.to_string(),
            })
        };
        let config = ModelConfig {
            problem: get("problem").parse::<ProblemId>()?,
            algorithm: get("model").parse::<Algorithm>()?,
            contemporaneous: parse_yes_no(get("contemporaneous"), row, "contemporaneous")?,
            outcome_lags: parse_yes_no(get("outcome_lags"), row, "outcome_lags")?,
            split: get("split_type").parse::<SplitKind>()?,
            adjust_test_size: parse_yes_no(get("adj_test_size"), row, "adj_test_size")?,
            seed: parse_u("seed")?,
        };
        let flags = LeakageFlags {
            temporal_leaked: parse_yes_no(get("temporal_leaked"), row, "temporal_leaked")?,
            cross_sectional_leaked: parse_yes_no(get("cross_sectional_leaked"), row, "cross_sectional_leaked")?,
        };
        if flags != classify_leakage(config.contemporaneous, config.split) {
            return Err(Error::Parse {
                row,
                column: "temporal_leaked".into(),
                message: "leakage flags disagree with the configuration".into(),
            });
        }
        let error = Some(get("error").to_string()).filter(|s| !s.is_empty());
        let metrics = match (parse_f("auc")?, parse_f("mse")?) {
            (Some(auc), _) => Some(Metrics::Classification(ClassificationReport {
                auc,
                sensitivity: parse_f("sensitivity")?.unwrap_or(f64::NAN),
                specificity: parse_f("specificity")?.unwrap_or(f64::NAN),
                threshold: crate::metrics::DEFAULT_THRESHOLD,
            })),
            (None, Some(mse)) => Some(Metrics::Regression(RegressionReport { mse })),
            (None, None) => None,
        };
        out.push(ResultRecord {
            config,
            flags,
            metrics,
            train_size: parse_u("train_size")? as usize,
            test_size: parse_u("test_size")? as usize,
            error,
        });
    }
    Ok(out)
}

/// Leaked vs clean comparison for one problem and one algorithm, or all
/// algorithms when `algorithm` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub problem: ProblemId,
    pub algorithm: Option<Algorithm>,
    pub metric: String,
    pub n_leaked: usize,
    pub n_clean: usize,
    pub n_failed: usize,
    pub leaked_mean: Option<f64>,
    pub clean_mean: Option<f64>,
    /// Leaked mean minus clean mean.
    pub gap: Option<f64>,
    /// Signed so that positive means leakage flattered the model.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub groups: Vec<GroupSummary>,
    /// Per problem, indices into the input ordered from worst to best.
    pub ordering: BTreeMap<ProblemId, Vec<usize>>,
}

impl SummaryReport {
    pub fn overall(&self, problem: ProblemId) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.problem == problem && g.algorithm.is_none())
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize_group(problem: ProblemId, algorithm: Option<Algorithm>, records: &[&ResultRecord]) -> GroupSummary {
    let binary = problem.is_binary();
    let mut leaked = Vec::new();
    let mut clean = Vec::new();
    let mut n_failed = 0;
    for r in records {
        match r.headline() {
            Some(v) if r.leaked() => leaked.push(v),
            Some(v) => clean.push(v),
            None => n_failed += 1,
        }
    }
    let (leaked_mean, clean_mean) = (mean(&leaked), mean(&clean));
    let (gap, ratio) = match (leaked_mean, clean_mean) {
        (Some(l), Some(c)) => {
            let orientation = if binary {
                Orientation::HigherIsBetter
            } else {
                Orientation::LowerIsBetter
            };
            (Some(l - c), leakage_ratio(c, l, orientation).ok())
        }
        _ => (None, None),
    };
    GroupSummary {
        problem,
        algorithm,
        metric: if binary { "auc" } else { "mse" }.into(),
        n_leaked: leaked.len(),
        n_clean: clean.len(),
        n_failed,
        leaked_mean,
        clean_mean,
        gap,
        ratio,
    }
}

/// Partitions each problem's records into leaked and clean, compares their
/// mean headline metric, and orders records from worst to best.
pub fn summarize(results: &[ResultRecord]) -> Result<SummaryReport> {
    if results.is_empty() {
        return Err(invalid("no results to summarize"));
    }
    let mut by_problem: BTreeMap<ProblemId, Vec<usize>> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        by_problem.entry(r.config.problem).or_default().push(i);
    }
    let mut groups = Vec::new();
    let mut ordering = BTreeMap::new();
    for (problem, idx) in by_problem {
        let recs: Vec<&ResultRecord> = idx.iter().map(|&i| &results[i]).collect();
        let mut algorithms: Vec<Algorithm> = recs.iter().map(|r| r.config.algorithm).collect();
        algorithms.sort();
        algorithms.dedup();
        for a in algorithms {
            let subset: Vec<&ResultRecord> = recs.iter().copied().filter(|r| r.config.algorithm == a).collect();
            groups.push(summarize_group(problem, Some(a), &subset));
        }
        groups.push(summarize_group(problem, None, &recs));

        let mut order: Vec<usize> = idx.into_iter().filter(|&i| results[i].headline().is_some()).collect();
        let higher_better = problem.is_binary();
        order.sort_by(|&a, &b| {
            let (va, vb) = (results[a].headline().unwrap(), results[b].headline().unwrap());
            let c = va.total_cmp(&vb);
            (if higher_better { c } else { c.reverse() }).then(a.cmp(&b))
        });
        ordering.insert(problem, order);
    }
    Ok(SummaryReport { groups, ordering })
}

fn fmt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Plain-text table of the summary, three decimals.
pub fn render_summary(report: &SummaryReport) -> String {
    let mut rows = vec![[
        "problem".to_string(),
        "model".into(),
        "metric".into(),
        "n_leaked".into(),
        "leaked_mean".into(),
        "n_clean".into(),
        "clean_mean".into(),
        "gap".into(),
        "ratio".into(),
        "failed".into(),
    ]];
    for g in &report.groups {
        rows.push([
            g.problem.name().into(),
            g.algorithm.map_or("all", |a| a.name()).into(),
            g.metric.clone(),
            g.n_leaked.to_string(),
            fmt3(g.leaked_mean),
            g.n_clean.to_string(),
            fmt3(g.clean_mean),
            fmt3(g.gap),
            fmt3(g.ratio),
            g.n_failed.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..10).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Plot data: one row per record in worst-to-best order per problem.
pub fn write_plot_data<W: Write>(results: &[ResultRecord], report: &SummaryReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "problem",
        "rank",
        "metric",
        "value",
        "model",
        "contemporaneous",
        "outcome_lags",
        "split_type",
        "adj_test_size",
        "leaked",
    ])?;
    for (problem, order) in &report.ordering {
        let metric = if problem.is_binary() { "auc" } else { "mse" };
        for (rank, &i) in order.iter().enumerate() {
            let r = &results[i];
            let c = &r.config;
            w.write_record([
                problem.name().to_string(),
                (rank + 1).to_string(),
                metric.to_string(),
                opt(r.headline()),
                c.algorithm.name().to_string(),
                yes_no(c.contemporaneous).to_string(),
                yes_no(c.outcome_lags).to_string(),
                c.split.name().to_string(),
                yes_no(c.adjust_test_size).to_string(),
                yes_no(r.leaked()).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(problem: ProblemId, split: SplitKind, contemporaneous: bool, value: f64) -> ResultRecord {
        let config = ModelConfig {
            problem,
            algorithm: Algorithm::RandomForest,
            contemporaneous,
            outcome_lags: true,
            split,
            adjust_test_size: false,
            seed: 1,
        };
        let metrics = if problem.is_binary() {
            Metrics::Classification(ClassificationReport {
                auc: value,
                sensitivity: 0.5,
                specificity: 0.25,
                threshold: 0.5,
            })
        } else {
            Metrics::Regression(RegressionReport { mse: value })
        };
        ResultRecord {
            config,
            flags: config.flags(),
            metrics: Some(metrics),
            train_size: 10,
            test_size: 3,
            error: None,
        }
    }

    #[test]
    fn gap_examples() {
        let p = ProblemId::ForecastBinary;
        let r = vec![
            record(p, SplitKind::ObservationRandom, true, 0.759),
            record(p, SplitKind::TimeHoldout, false, 0.708),
        ];
        let s = summarize(&r).unwrap();
        let all = s.overall(p).unwrap();
        assert!((all.gap.unwrap() - 0.051).abs() < 1e-12);
        assert!(render_summary(&s).contains("0.051"));

        let p = ProblemId::ForecastBinaryBreakYear;
        let r = vec![
            record(p, SplitKind::ObservationRandom, true, 0.692),
            record(p, SplitKind::TimeHoldout, false, 0.442),
        ];
        assert!((summarize(&r).unwrap().overall(p).unwrap().gap.unwrap() - 0.25).abs() < 1e-12);

        let r = vec![
            record(p, SplitKind::ObservationRandom, true, 0.6),
            record(p, SplitKind::TimeHoldout, false, 0.6),
        ];
        let g = summarize(&r).unwrap().overall(p).unwrap().clone();
        assert_eq!((g.gap, g.ratio), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn one_sided_gap_absent() {
        let p = ProblemId::ForecastContinuous;
        let r = vec![record(p, SplitKind::ObservationRandom, false, 0.1)];
        let s = summarize(&r).unwrap();
        assert_eq!(s.overall(p).unwrap().gap, None);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn ordering_worst_to_best() {
        let p = ProblemId::CrossSectionalContinuous;
        let r = vec![
            record(p, SplitKind::ObservationRandom, false, 0.05),
            record(p, SplitKind::GroupRandom, false, 0.07),
            record(p, SplitKind::UnitRandom, false, 0.06),
        ];
        let s = summarize(&r).unwrap();
        assert_eq!(s.ordering[&p], vec![1, 2, 0]);
        let mut buf = Vec::new();
        write_plot_data(&r, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("cross_sectional_continuous,1,mse,0.07,rforest"));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = vec![
            record(ProblemId::ForecastBinary, SplitKind::TimeHoldout, false, 0.7),
            record(ProblemId::ForecastContinuous, SplitKind::UnitRandom, true, 0.02),
        ];
        r.push(ResultRecord::failed(r[0].config, &Error::SingleClass));
        let mut buf = Vec::new();
        write_results(&r, &mut buf).unwrap();
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn tampered_flags_rejected() {
        let r = vec![record(ProblemId::ForecastBinary, SplitKind::TimeHoldout, false, 0.7)];
        let mut buf = Vec::new();
        write_results(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",no,yes,1,", ",yes,yes,1,");
        assert!(read_results(text.as_bytes()).is_err());
    }
}
