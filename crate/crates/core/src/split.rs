//! Train/test split strategies for panel data and a mechanical check of
//! which leakage channels an assignment leaves open.
//!
//! | strategy            | units shared | periods shared | consequence                       |
//! |---------------------|--------------|----------------|-----------------------------------|
//! | observation random  | yes          | yes            | temporal and cross-sectional      |
//! | unit random         | no           | yes            | temporal (trend)                  |
//! | group random        | no           | yes            | temporal (trend)                  |
//! | time holdout        | yes          | no             | cross-sectional                   |
//! | combined            | no           | no             | none (cells discarded)            |

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::panel::PanelDataset;
use crate::rng::{derive_seed, round_half_up, seeded};

/// A split strategy with exactly the parameters its kind needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitStrategy {
    ObservationRandom { test_fraction: f64, seed: u64 },
    UnitRandom { test_fraction: f64, seed: u64 },
    GroupRandom { test_fraction: f64, seed: u64 },
    TimeHoldout { test_periods: Vec<i64> },
    Combined { test_periods: Vec<i64>, test_fraction: f64, seed: u64 },
}

impl SplitStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SplitStrategy::ObservationRandom { .. } => "observation_random",
            SplitStrategy::UnitRandom { .. } => "unit_random",
            SplitStrategy::GroupRandom { .. } => "group_random",
            SplitStrategy::TimeHoldout { .. } => "time_holdout",
            SplitStrategy::Combined { .. } => "combined",
        }
    }

    /// Runs the strategy on `ds`.
    pub fn apply(&self, ds: &PanelDataset) -> Result<SplitAssignment> {
        match self {
            SplitStrategy::ObservationRandom { test_fraction, seed } => {
                split_observation_random(ds, *test_fraction, *seed)
            }
            SplitStrategy::UnitRandom { test_fraction, seed } => {
                split_unit_random(ds, *test_fraction, *seed)
            }
            SplitStrategy::GroupRandom { test_fraction, seed } => {
                split_group_random(ds, *test_fraction, *seed)
            }
            SplitStrategy::TimeHoldout { test_periods } => split_time_holdout(ds, test_periods),
            SplitStrategy::Combined {
                test_periods,
                test_fraction,
                seed,
            } => split_combined(ds, test_periods, *test_fraction, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Train,
    Test,
    /// Neither trained on nor evaluated.
    Excluded,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Train => "train",
            Label::Test => "test",
            Label::Excluded => "excluded",
        }
    }
}

/// Per-row train/test labelling produced by a [`SplitStrategy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub labels: Vec<Label>,
    pub strategy: SplitStrategy,
    pub train_size: usize,
    pub test_size: usize,
    pub excluded: usize,
}

impl SplitAssignment {
    fn new(labels: Vec<Label>, strategy: SplitStrategy) -> Result<Self> {
        let count = |l: Label| labels.iter().filter(|&&x| x == l).count();
        let (train_size, test_size, excluded) = (count(Label::Train), count(Label::Test), count(Label::Excluded));
        if train_size == 0 {
            return Err(Error::EmptyPartition("training set is empty".into()));
        }
        if test_size == 0 {
            return Err(Error::EmptyPartition("test set is empty".into()));
        }
        Ok(Self {
            labels,
            strategy,
            train_size,
            test_size,
            excluded,
        })
    }

    pub fn train_rows(&self) -> Vec<usize> {
        self.rows_with(Label::Train)
    }

    pub fn test_rows(&self) -> Vec<usize> {
        self.rows_with(Label::Test)
    }

    pub fn rows_with(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes `row_key,label` lines for every row of `ds`.
    pub fn write_csv<W: Write>(&self, ds: &PanelDataset, writer: W) -> Result<()> {
        if ds.n_rows() != self.labels.len() {
            return Err(Error::ShapeMismatch {
                expected: ds.n_rows(),
                actual: self.labels.len(),
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row_key", "label"])?;
        for (row, label) in self.labels.iter().enumerate() {
            w.write_record([ds.row_key(row).as_str(), label.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_fraction(test_fraction: f64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    Ok(())
}

/// Chooses `round(test_fraction * n)` of `n` items; errors if that leaves
/// either side empty.
fn sample_count(n: usize, test_fraction: f64, what: &str) -> Result<usize> {
    check_fraction(test_fraction)?;
    let k = round_half_up(test_fraction * n as f64);
    if k == 0 {
        return Err(Error::EmptyPartition(format!(
            "test fraction {test_fraction} of {n} {what} selects none"
        )));
    }
    if k >= n {
        return Err(Error::EmptyPartition(format!(
            "test fraction {test_fraction} of {n} {what} leaves none for training"
        )));
    }
    Ok(k)
}

fn sampled_set(n: usize, k: usize, seed: u64) -> Vec<bool> {
    let mut rng = seeded(seed);
    let mut chosen = vec![false; n];
    for i in index::sample(&mut rng, n, k) {
        chosen[i] = true;
    }
    chosen
}

/// Random split at the observation (unit-time) level.
pub fn split_observation_random(ds: &PanelDataset, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(invalid("observation split needs at least two rows"));
    }
    let k = sample_count(n, test_fraction, "rows")?;
    let chosen = sampled_set(n, k, seed);
    let labels = chosen
        .into_iter()
        .map(|t| if t { Label::Test } else { Label::Train })
        .collect();
    SplitAssignment::new(labels, SplitStrategy::ObservationRandom { test_fraction, seed })
}

/// Random split at the unit level: whole units go to one side.
pub fn split_unit_random(ds: &PanelDataset, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    let n = ds.n_units();
    if n < 2 {
        return Err(invalid("unit split needs at least two units"));
    }
    let k = sample_count(n, test_fraction, "units")?;
    let test_units = sampled_set(n, k, seed);
    let labels = ds
        .row_units()
        .iter()
        .map(|&u| if test_units[u] { Label::Test } else { Label::Train })
        .collect();
    SplitAssignment::new(labels, SplitStrategy::UnitRandom { test_fraction, seed })
}

/// Random split at the group level. Groups are visited in a seeded order
/// and taken whole until the test share of units first reaches
/// `test_fraction`, so the realised share may overshoot.
pub fn split_group_random(ds: &PanelDataset, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !ds.has_groups() {
        return Err(Error::NoGroups);
    }
    check_fraction(test_fraction)?;
    let g = ds.n_groups();
    if g < 2 {
        return Err(invalid("group split needs at least two groups"));
    }
    let mut units_per_group = vec![0usize; g];
    for u in 0..ds.n_units() {
        units_per_group[ds.group_of_unit(u).expect("grouped panel")] += 1;
    }
    let mut order: Vec<usize> = (0..g).collect();
    order.shuffle(&mut seeded(seed));

    let n_units = ds.n_units() as f64;
    let mut test_groups = vec![false; g];
    let mut taken = 0usize;
    for &grp in &order {
        if taken as f64 / n_units >= test_fraction - 1e-12 {
            break;
        }
        test_groups[grp] = true;
        taken += units_per_group[grp];
    }
    let labels = (0..ds.n_rows())
        .map(|r| {
            if test_groups[ds.group_of(r).expect("grouped panel")] {
                Label::Test
            } else {
                Label::Train
            }
        })
        .collect();
    SplitAssignment::new(labels, SplitStrategy::GroupRandom { test_fraction, seed })
}

/// Checks that `test_periods` is a non-empty strict suffix of the observed
/// periods and returns its first period.
fn check_suffix(ds: &PanelDataset, test_periods: &[i64]) -> Result<i64> {
    let wanted: BTreeSet<i64> = test_periods.iter().copied().collect();
    let observed = ds.periods();
    if wanted.is_empty() {
        return Err(Error::Contract("test_periods is empty".into()));
    }
    if wanted.len() >= observed.len() {
        return Err(Error::Contract(
            "test_periods must leave at least one earlier period for training".into(),
        ));
    }
    let suffix = &observed[observed.len() - wanted.len()..];
    if !suffix.iter().copied().eq(wanted.iter().copied()) {
        return Err(Error::Contract(format!(
            "test_periods {wanted:?} are not the final block of observed periods"
        )));
    }
    Ok(suffix[0])
}

/// The last `count` observed periods.
pub fn last_periods(ds: &PanelDataset, count: usize) -> Vec<i64> {
    let p = ds.periods();
    p[p.len().saturating_sub(count)..].to_vec()
}

/// Non-random split on time: the final block of periods is the test set.
pub fn split_time_holdout(ds: &PanelDataset, test_periods: &[i64]) -> Result<SplitAssignment> {
    let first_test = check_suffix(ds, test_periods)?;
    let labels = ds
        .row_periods()
        .iter()
        .map(|&p| if p >= first_test { Label::Test } else { Label::Train })
        .collect();
    let mut tp = test_periods.to_vec();
    tp.sort_unstable();
    tp.dedup();
    SplitAssignment::new(labels, SplitStrategy::TimeHoldout { test_periods: tp })
}

/// Unit- and time-disjoint split: sampled units in the test periods form
/// the test set, the remaining units in earlier periods form the training
/// set, and every other cell is excluded.
pub fn split_combined(
    ds: &PanelDataset,
    test_periods: &[i64],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    let first_test = check_suffix(ds, test_periods)?;
    let n = ds.n_units();
    if n < 2 {
        return Err(invalid("combined split needs at least two units"));
    }
    let k = sample_count(n, test_fraction, "units")?;
    let test_units = sampled_set(n, k, seed);
    let labels = (0..ds.n_rows())
        .map(|r| {
            let in_test_time = ds.period(r) >= first_test;
            match (test_units[ds.unit_of(r)], in_test_time) {
                (true, true) => Label::Test,
                (false, false) => Label::Train,
                _ => Label::Excluded,
            }
        })
        .collect();
    let mut tp = test_periods.to_vec();
    tp.sort_unstable();
    tp.dedup();
    SplitAssignment::new(
        labels,
        SplitStrategy::Combined {
            test_periods: tp,
            test_fraction,
            seed,
        },
    )
}

/// Keeps a seeded uniform subsample of exactly `target_size` test rows; the
/// other former test rows become `Excluded`. Training rows are untouched.
pub fn adjust_test_size(assignment: &SplitAssignment, target_size: usize, seed: u64) -> Result<SplitAssignment> {
    if target_size > assignment.test_size {
        return Err(invalid(format!(
            "target test size {target_size} exceeds current test size {}",
            assignment.test_size
        )));
    }
    if target_size == 0 {
        return Err(Error::EmptyPartition("target test size is zero".into()));
    }
    let test_rows = assignment.test_rows();
    let keep = sampled_set(test_rows.len(), target_size, seed);
    let mut labels = assignment.labels.clone();
    for (row, kept) in test_rows.into_iter().zip(keep) {
        if !kept {
            labels[row] = Label::Excluded;
        }
    }
    SplitAssignment::new(labels, assignment.strategy.clone())
}

/// Subsamples both partitions to the given sizes with seeded uniform draws;
/// dropped rows become `Excluded`.
pub fn adjust_sizes(
    assignment: &SplitAssignment,
    train_target: usize,
    test_target: usize,
    seed: u64,
) -> Result<SplitAssignment> {
    if train_target > assignment.train_size {
        return Err(invalid(format!(
            "target train size {train_target} exceeds current train size {}",
            assignment.train_size
        )));
    }
    if train_target == 0 {
        return Err(Error::EmptyPartition("target train size is zero".into()));
    }
    let tested = adjust_test_size(assignment, test_target, seed)?;
    let train_rows = tested.train_rows();
    let keep = sampled_set(train_rows.len(), train_target, derive_seed(seed, 1));
    let mut labels = tested.labels;
    for (row, kept) in train_rows.into_iter().zip(keep) {
        if !kept {
            labels[row] = Label::Excluded;
        }
    }
    SplitAssignment::new(labels, assignment.strategy.clone())
}

/// Excludes test rows for which `keep` is false.
pub fn restrict_test(assignment: &SplitAssignment, keep: impl Fn(usize) -> bool) -> Result<SplitAssignment> {
    let labels = assignment
        .labels
        .iter()
        .enumerate()
        .map(|(row, &l)| if l == Label::Test && !keep(row) { Label::Excluded } else { l })
        .collect();
    SplitAssignment::new(labels, assignment.strategy.clone())
}

/// Which leakage channels an assignment leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageDiagnosis {
    pub units_shared: bool,
    pub periods_shared: bool,
    pub groups_shared: bool,
    /// Some training period is at or after some test period.
    pub future_in_train: bool,
    pub temporal_leakage_possible: bool,
    pub cross_sectional_leakage_possible: bool,
    /// Units differ but their groups overlap.
    pub spatial_leakage_possible: bool,
}

impl LeakageDiagnosis {
    /// Human-readable consequence, in the vocabulary of the split taxonomy.
    pub fn consequence(&self) -> &'static str {
        match (self.temporal_leakage_possible, self.cross_sectional_leakage_possible) {
            (true, true) => "Temporal and cross-sectional leakage",
            (true, false) if self.periods_shared => "Temporal (trend) leakage",
            (true, false) => "Temporal leakage",
            (false, true) => "Cross-sectional leakage",
            (false, false) => "No leakage",
        }
    }
}

/// Derives the leakage diagnosis from labels alone.
pub fn verify_assignment(ds: &PanelDataset, assignment: &SplitAssignment) -> LeakageDiagnosis {
    let mut train_units = BTreeSet::new();
    let mut test_units = BTreeSet::new();
    let mut train_periods = BTreeSet::new();
    let mut test_periods = BTreeSet::new();
    let mut train_groups = BTreeSet::new();
    let mut test_groups = BTreeSet::new();
    for (row, label) in assignment.labels.iter().enumerate().take(ds.n_rows()) {
        let (units, periods, groups) = match label {
            Label::Train => (&mut train_units, &mut train_periods, &mut train_groups),
            Label::Test => (&mut test_units, &mut test_periods, &mut test_groups),
            Label::Excluded => continue,
        };
        units.insert(ds.unit_of(row));
        periods.insert(ds.period(row));
        if let Some(g) = ds.group_of(row) {
            groups.insert(g);
        }
    }
    let units_shared = !train_units.is_disjoint(&test_units);
    let periods_shared = !train_periods.is_disjoint(&test_periods);
    let groups_shared = !train_groups.is_disjoint(&test_groups);
    let future_in_train = match (train_periods.last(), test_periods.first()) {
        (Some(max_train), Some(min_test)) => max_train >= min_test,
        _ => false,
    };
    LeakageDiagnosis {
        units_shared,
        periods_shared,
        groups_shared,
        future_in_train,
        temporal_leakage_possible: periods_shared || future_in_train,
        cross_sectional_leakage_possible: units_shared,
        spatial_leakage_possible: !units_shared && groups_shared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{PanelSchema, ValidationPolicy};
    use crate::testutil::panel;

    #[test]
    fn observation_random_counts() {
        let ds = panel(5, 2, 1);
        let a = split_observation_random(&ds, 0.2, 3).unwrap();
        assert_eq!((a.test_size, a.train_size), (2, 8));
        assert_eq!(a, split_observation_random(&ds, 0.2, 3).unwrap());
    }

    #[test]
    fn observation_random_rejects_degenerate_fraction() {
        let ds = panel(2, 2, 1);
        assert!(split_observation_random(&ds, 0.01, 0).is_err());
        assert!(split_observation_random(&ds, 0.99, 0).is_err());
        assert!(split_observation_random(&ds, 1.0, 0).is_err());
        assert!(split_observation_random(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn unit_random_counts() {
        let ds = panel(5, 3, 1);
        let a = split_unit_random(&ds, 0.2, 11).unwrap();
        assert_eq!((a.test_size, a.train_size), (3, 12));
        let d = verify_assignment(&ds, &a);
        assert!(!d.units_shared);
    }

    #[test]
    fn unit_random_needs_two_units() {
        let ds = panel(1, 3, 1);
        assert!(split_unit_random(&ds, 0.5, 0).is_err());
    }

    #[test]
    fn group_random_takes_one_of_five_equal_groups() {
        let ds = panel(10, 2, 5);
        for seed in 0..20 {
            let a = split_group_random(&ds, 0.2, seed).unwrap();
            let groups: BTreeSet<usize> = a.test_rows().iter().map(|&r| ds.group_of(r).unwrap()).collect();
            assert_eq!(groups.len(), 1);
            assert!(!verify_assignment(&ds, &a).groups_shared);
        }
    }

    #[test]
    fn group_random_errors() {
        assert!(split_group_random(&panel(4, 2, 1), 0.5, 0).is_err());
        let text = "unit,year,y,x\na,1,1,1\nb,1,1,1\n";
        let schema = PanelSchema {
            unit_column: "unit".into(),
            group_column: None,
            time_column: "year".into(),
            outcome_columns: vec!["y".into()],
            predictor_columns: vec!["x".into()],
        };
        let ds = crate::panel::load_panel(text.as_bytes(), &schema, ValidationPolicy::Strict).unwrap();
        assert!(matches!(split_group_random(&ds, 0.5, 0), Err(Error::NoGroups)));
    }

    #[test]
    fn time_holdout_suffix() {
        let ds = panel(20, 7, 5);
        let a = split_time_holdout(&ds, &[6, 7]).unwrap();
        let train: BTreeSet<i64> = a.train_rows().iter().map(|&r| ds.period(r)).collect();
        let test: BTreeSet<i64> = a.test_rows().iter().map(|&r| ds.period(r)).collect();
        assert_eq!(train.into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert_eq!(test.into_iter().collect::<Vec<_>>(), vec![6, 7]);
    }

    #[test]
    fn time_holdout_rejects_non_suffix() {
        let ds = panel(3, 7, 1);
        assert!(matches!(split_time_holdout(&ds, &[5, 6]), Err(Error::Contract(_))));
        assert!(matches!(split_time_holdout(&ds, &[]), Err(Error::Contract(_))));
        let all: Vec<i64> = (1..=7).collect();
        assert!(matches!(split_time_holdout(&ds, &all), Err(Error::Contract(_))));
    }

    #[test]
    fn combined_four_by_four() {
        let ds = panel(4, 4, 2);
        let a = split_combined(&ds, &[4], 0.5, 5).unwrap();
        assert_eq!((a.train_size, a.test_size, a.excluded), (6, 2, 8));
        let d = verify_assignment(&ds, &a);
        assert!(!d.units_shared && !d.periods_shared);
        assert!(!d.temporal_leakage_possible && !d.cross_sectional_leakage_possible);
    }

    #[test]
    fn combined_rejects_empty_train() {
        let ds = panel(2, 3, 1);
        assert!(matches!(
            split_combined(&ds, &[3], 0.999, 0),
            Err(Error::EmptyPartition(_))
        ));
    }

    #[test]
    fn adjust_subsamples_test_only() {
        let ds = panel(10, 5, 2);
        let a = split_time_holdout(&ds, &[4, 5]).unwrap();
        let adj = adjust_test_size(&a, 7, 1).unwrap();
        assert_eq!(adj.test_size, 7);
        assert_eq!(adj.train_size, a.train_size);
        assert_eq!(adj.excluded, 13);
        for (old, new) in a.labels.iter().zip(&adj.labels) {
            match old {
                Label::Train => assert_eq!(*new, Label::Train),
                Label::Test => assert_ne!(*new, Label::Train),
                Label::Excluded => assert_eq!(*new, Label::Excluded),
            }
        }
        assert_eq!(adjust_test_size(&a, a.test_size, 9).unwrap(), a);
        assert!(adjust_test_size(&a, a.test_size + 1, 9).is_err());
    }

    #[test]
    fn adjust_both_partitions() {
        let ds = panel(10, 6, 2);
        let a = split_time_holdout(&ds, &[5, 6]).unwrap();
        let adj = adjust_sizes(&a, 24, 8, 4).unwrap();
        assert_eq!((adj.train_size, adj.test_size, adj.excluded), (24, 8, 28));
        assert!(adjust_sizes(&a, 41, 8, 4).is_err());
        let r = restrict_test(&a, |row| ds.period(row) == 6).unwrap();
        assert_eq!((r.train_size, r.test_size), (40, 10));
        assert!(restrict_test(&a, |_| false).is_err());
    }

    #[test]
    fn table_consequences() {
        let ds = panel(20, 7, 5);
        let obs = verify_assignment(&ds, &split_observation_random(&ds, 0.2, 1).unwrap());
        assert_eq!(obs.consequence(), "Temporal and cross-sectional leakage");
        let unit = verify_assignment(&ds, &split_unit_random(&ds, 0.2, 1).unwrap());
        assert_eq!(unit.consequence(), "Temporal (trend) leakage");
        assert!(unit.spatial_leakage_possible);
        let group = verify_assignment(&ds, &split_group_random(&ds, 0.2, 1).unwrap());
        assert_eq!(group.consequence(), "Temporal (trend) leakage");
        assert!(!group.spatial_leakage_possible);
        let time = verify_assignment(&ds, &split_time_holdout(&ds, &[6, 7]).unwrap());
        assert_eq!(time.consequence(), "Cross-sectional leakage");
    }

    #[test]
    fn csv_output() {
        let ds = panel(2, 2, 1);
        let a = split_time_holdout(&ds, &[2]).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&ds, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "row_key,label\nu000@1,train\nu000@2,test\nu001@1,train\nu001@2,test\n"
        );
    }
}
