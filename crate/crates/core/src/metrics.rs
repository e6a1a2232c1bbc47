//! Classification and regression metrics and the leakage ratio.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { expected: a, actual: b });
    }
    Ok(())
}

fn class_counts(labels: &[f64]) -> Result<(usize, usize)> {
    if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
        return Err(invalid("labels must be 0/1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC with midranks for ties.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, neg) = class_counts(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("scores contain NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Sensitivity and specificity with predicted positive iff score >= threshold.
pub fn confusion_at_threshold(scores: &[f64], labels: &[f64], threshold: f64) -> Result<(f64, f64)> {
    check_lengths(scores.len(), labels.len())?;
    let (pos, neg) = class_counts(labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        if predicted && l == 1.0 {
            tp += 1;
        } else if !predicted && l == 0.0 {
            tn += 1;
        }
    }
    Ok((tp as f64 / pos as f64, tn as f64 / neg as f64))
}

pub fn classification_report(scores: &[f64], labels: &[f64], threshold: f64) -> Result<ClassificationReport> {
    let (sensitivity, specificity) = confusion_at_threshold(scores, labels, threshold)?;
    Ok(ClassificationReport {
        auc: auc(scores, labels)?,
        sensitivity,
        specificity,
        threshold,
    })
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), targets.len())?;
    if predictions.is_empty() {
        return Err(Error::EmptyPartition("no rows to score".into()));
    }
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / predictions.len() as f64)
}

/// Relative improvement of the leaked metric over the clean one; positive
/// means leakage made the model look better.
pub fn leakage_ratio(metric_clean: f64, metric_leaked: f64, orientation: Orientation) -> Result<f64> {
    if metric_clean == 0.0 || !metric_clean.is_finite() {
        return Err(invalid("leakage ratio needs a finite non-zero clean metric"));
    }
    Ok(match orientation {
        Orientation::LowerIsBetter => (metric_clean - metric_leaked) / metric_clean,
        Orientation::HigherIsBetter => (metric_leaked - metric_clean) / metric_clean,
    })
}
