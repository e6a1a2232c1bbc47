//! Fold plans for hyperparameter tuning on a panel's training rows.
//!
//! Plans are purely structural: each fold is a pair of row-index sets over
//! the dataset. Fitting and score aggregation happen elsewhere.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::panel::PanelDataset;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldKind {
    /// Row-level random k-fold. Leaks future periods into fit sets on panels.
    RandomKfold,
    UnitKfold,
    GroupKfold,
    TemporalExpanding,
    TemporalRolling,
}

impl FoldKind {
    pub fn is_temporal(self) -> bool {
        matches!(self, FoldKind::TemporalExpanding | FoldKind::TemporalRolling)
    }

    /// Whether the plan ignores panel structure.
    pub fn is_leaky(self) -> bool {
        self == FoldKind::RandomKfold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fit: Vec<usize>,
    pub eval: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub kind: FoldKind,
    pub folds: Vec<Fold>,
    /// `k` for k-fold kinds.
    pub k: Option<usize>,
    /// Fit window length for rolling plans.
    pub window_len: Option<usize>,
    /// Periods skipped between fit and evaluation (temporal kinds).
    pub gap: usize,
}

impl FoldPlan {
    /// Writes `fold,row_key,role` lines.
    pub fn write_csv<W: Write>(&self, ds: &PanelDataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fold", "row_key", "role"])?;
        for (i, fold) in self.folds.iter().enumerate() {
            let idx = i.to_string();
            for (rows, role) in [(&fold.fit, "fit"), (&fold.eval, "eval")] {
                for &r in rows {
                    if r >= ds.n_rows() {
                        return Err(Error::IndexOutOfRange { index: r, len: ds.n_rows() });
                    }
                    w.write_record([idx.as_str(), ds.row_key(r).as_str(), role])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_rows(ds: &PanelDataset, rows: &[usize]) -> Result<()> {
    match rows.iter().find(|&&r| r >= ds.n_rows()) {
        Some(&r) => Err(Error::IndexOutOfRange { index: r, len: ds.n_rows() }),
        None => Ok(()),
    }
}

/// Splits `items` into `k` contiguous near-equal chunks (first chunks take
/// the remainder).
fn chunk_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Assigns each of `n_blocks` shuffled blocks to one of `k` folds.
fn block_folds(n_blocks: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.shuffle(&mut seeded(seed));
    let mut fold_of = vec![0; n_blocks];
    let mut pos = 0;
    for (f, size) in chunk_sizes(n_blocks, k).into_iter().enumerate() {
        for &b in &order[pos..pos + size] {
            fold_of[b] = f;
        }
        pos += size;
    }
    fold_of
}

fn folds_from_assignment(rows: &[usize], fold_of_row: impl Fn(usize) -> usize, k: usize) -> Vec<Fold> {
    (0..k)
        .map(|f| {
            let (eval, fit): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| fold_of_row(r) == f);
            Fold { fit, eval }
        })
        .collect()
}

/// Row-level random k-fold; the leaky baseline.
pub fn folds_random_kfold(ds: &PanelDataset, rows: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    check_rows(ds, rows)?;
    if k < 2 {
        return Err(invalid("k must be at least 2"));
    }
    if k > rows.len() {
        return Err(invalid(format!("k = {k} exceeds {} rows", rows.len())));
    }
    let fold_of = block_folds(rows.len(), k, seed);
    let pos: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    Ok(FoldPlan {
        kind: FoldKind::RandomKfold,
        folds: folds_from_assignment(rows, |r| fold_of[pos[&r]], k),
        k: Some(k),
        window_len: None,
        gap: 0,
    })
}

fn blocked_kfold(
    rows: &[usize],
    block_of: impl Fn(usize) -> usize,
    k: usize,
    seed: u64,
    kind: FoldKind,
    what: &str,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid("k must be at least 2"));
    }
    let blocks: BTreeMap<usize, usize> = rows
        .iter()
        .map(|&r| block_of(r))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    if k > blocks.len() {
        return Err(invalid(format!("k = {k} exceeds {} {what}", blocks.len())));
    }
    let fold_of = block_folds(blocks.len(), k, seed);
    Ok(FoldPlan {
        kind,
        folds: folds_from_assignment(rows, |r| fold_of[blocks[&block_of(r)]], k),
        k: Some(k),
        window_len: None,
        gap: 0,
    })
}

/// k-fold over units: a fold evaluates every row of its units.
pub fn folds_unit_kfold(ds: &PanelDataset, rows: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    check_rows(ds, rows)?;
    blocked_kfold(rows, |r| ds.unit_of(r), k, seed, FoldKind::UnitKfold, "units")
}

/// k-fold over groups.
pub fn folds_group_kfold(ds: &PanelDataset, rows: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    check_rows(ds, rows)?;
    let groups = ds.row_groups()?;
    blocked_kfold(rows, |r| groups[r], k, seed, FoldKind::GroupKfold, "groups")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    Expanding,
    Rolling,
}

/// Parameters of a temporal fold plan, in units of periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalCv {
    pub mode: WindowMode,
    pub min_train_periods: usize,
    pub horizon: usize,
    pub gap: usize,
    /// Fit window for rolling mode; ignored when expanding.
    pub window_len: usize,
}

impl TemporalCv {
    /// Expanding window from the first half of the periods, one-step
    /// horizon, no gap.
    pub fn default_for(n_periods: usize) -> Self {
        TemporalCv {
            mode: WindowMode::Expanding,
            min_train_periods: n_periods.div_ceil(2).max(1),
            horizon: 1,
            gap: 0,
            window_len: n_periods.div_ceil(2).max(1),
        }
    }
}

/// Rolling-origin plan over the periods present in `rows`. Periods are
/// indexed 1..=T in ascending order; for each origin `o` from
/// `min_train_periods` to `T - horizon - gap`, the fit set is the periods
/// up to `o` (or the last `window_len` of them) and the evaluation set is
/// periods `o + gap + 1 ..= o + gap + horizon`.
pub fn folds_temporal(ds: &PanelDataset, rows: &[usize], params: TemporalCv) -> Result<FoldPlan> {
    check_rows(ds, rows)?;
    let TemporalCv {
        mode,
        min_train_periods,
        horizon,
        gap,
        window_len,
    } = params;
    if min_train_periods < 1 || horizon < 1 {
        return Err(invalid("min_train_periods and horizon must be at least 1"));
    }
    if mode == WindowMode::Rolling && window_len < 1 {
        return Err(invalid("window_len must be at least 1"));
    }
    let periods: Vec<i64> = rows
        .iter()
        .map(|&r| ds.period(r))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let t = periods.len();
    if t < min_train_periods + gap + horizon {
        return Err(invalid(format!(
            "{t} periods cannot hold {min_train_periods} training, {gap} gap and {horizon} evaluation periods"
        )));
    }
    let position: BTreeMap<i64, usize> = periods.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();

    let folds = (min_train_periods..=t - horizon - gap)
        .map(|origin| {
            let fit_start = match mode {
                WindowMode::Expanding => 1,
                WindowMode::Rolling => origin.saturating_sub(window_len - 1).max(1),
            };
            let eval_start = origin + gap + 1;
            let eval_end = origin + gap + horizon;
            let mut fold = Fold {
                fit: Vec::new(),
                eval: Vec::new(),
            };
            for &r in rows {
                let pos = position[&ds.period(r)];
                if (fit_start..=origin).contains(&pos) {
                    fold.fit.push(r);
                } else if (eval_start..=eval_end).contains(&pos) {
                    fold.eval.push(r);
                }
            }
            fold
        })
        .collect();
    Ok(FoldPlan {
        kind: match mode {
            WindowMode::Expanding => FoldKind::TemporalExpanding,
            WindowMode::Rolling => FoldKind::TemporalRolling,
        },
        folds,
        k: None,
        window_len: (mode == WindowMode::Rolling).then_some(window_len),
        gap,
    })
}
