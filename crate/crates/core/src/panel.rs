//! Panel dataset model: schema, ingestion from delimited text, structural
//! validation and row selection.
//!
//! A [`PanelDataset`] is immutable once built. Rows are kept sorted by
//! `(unit, period)`; every derived dataset (subsets, added columns) is a new
//! value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names the key and data columns of a panel file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    pub unit_column: String,
    #[serde(default)]
    pub group_column: Option<String>,
    pub time_column: String,
    pub outcome_columns: Vec<String>,
    pub predictor_columns: Vec<String>,
}

impl PanelSchema {
    pub fn validate(&self) -> Result<()> {
        if self.outcome_columns.is_empty() {
            return Err(Error::Schema("at least one outcome column is required".into()));
        }
        if self.predictor_columns.is_empty() {
            return Err(Error::Schema("at least one predictor column is required".into()));
        }
        let mut seen = BTreeSet::new();
        let keys = std::iter::once(&self.unit_column)
            .chain(self.group_column.iter())
            .chain(std::iter::once(&self.time_column));
        for name in keys.chain(self.data_columns()) {
            if name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("column `{name}` is declared twice")));
            }
        }
        Ok(())
    }

    /// Outcome columns followed by predictor columns.
    pub fn data_columns(&self) -> impl Iterator<Item = &String> {
        self.outcome_columns.iter().chain(self.predictor_columns.iter())
    }
}

/// What to do with defective input rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationPolicy {
    /// Any defect aborts ingestion.
    #[default]
    Strict,
    /// Rows with missing cells, duplicate keys, or inconsistent group
    /// membership are dropped.
    DropDefective,
}

/// Role of a column added after ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Outcome,
    Predictor,
}

/// Structural defects found in a panel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub balanced: bool,
    pub duplicate_keys: Vec<(String, i64)>,
    pub units_with_gaps: Vec<String>,
    pub missing_cells: usize,
    pub group_inconsistencies: Vec<String>,
}

impl ValidationReport {
    /// True when the panel passes strict validation.
    pub fn is_clean(&self) -> bool {
        self.duplicate_keys.is_empty()
            && self.units_with_gaps.is_empty()
            && self.missing_cells == 0
            && self.group_inconsistencies.is_empty()
    }
}

/// One raw input record, before validation.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub unit: String,
    pub group: Option<String>,
    pub period: i64,
    /// Values in `schema.data_columns()` order; `None` marks a missing cell.
    pub values: Vec<Option<f64>>,
    /// 1-based source line, for error messages.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Column {
    name: String,
    values: Vec<f64>,
}

/// A validated unit × period table.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    schema: PanelSchema,
    units: Vec<String>,
    groups: Vec<String>,
    unit_group: Vec<Option<usize>>,
    row_unit: Vec<usize>,
    row_period: Vec<i64>,
    columns: Vec<Column>,
    periods: Vec<i64>,
}

impl PanelDataset {
    /// Builds a dataset from raw records, enforcing the panel invariants
    /// according to `policy`.
    pub fn from_records(
        schema: PanelSchema,
        records: Vec<RawRecord>,
        policy: ValidationPolicy,
    ) -> Result<Self> {
        Ok(assemble(schema, records, policy)?.0)
    }

    pub fn schema(&self) -> &PanelSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.row_unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_unit.is_empty()
    }

    /// Number of distinct units (N).
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Number of distinct periods (T).
    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    /// Number of distinct groups (G); zero without a group column.
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn has_groups(&self) -> bool {
        self.schema.group_column.is_some()
    }

    /// Distinct periods, ascending.
    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.units
    }

    pub fn group_ids(&self) -> &[String] {
        &self.groups
    }

    pub fn unit_of(&self, row: usize) -> usize {
        self.row_unit[row]
    }

    pub fn unit_id(&self, row: usize) -> &str {
        &self.units[self.row_unit[row]]
    }

    pub fn period(&self, row: usize) -> i64 {
        self.row_period[row]
    }

    pub fn row_units(&self) -> &[usize] {
        &self.row_unit
    }

    pub fn row_periods(&self) -> &[i64] {
        &self.row_period
    }

    /// Group index of unit `unit`.
    pub fn group_of_unit(&self, unit: usize) -> Option<usize> {
        self.unit_group[unit]
    }

    pub fn group_of(&self, row: usize) -> Option<usize> {
        self.unit_group[self.row_unit[row]]
    }

    /// Group index of every row; errors when the panel has no group column.
    pub fn row_groups(&self) -> Result<Vec<usize>> {
        if !self.has_groups() {
            return Err(Error::NoGroups);
        }
        Ok(self
            .row_unit
            .iter()
            .map(|&u| self.unit_group[u].expect("grouped panel"))
            .collect())
    }

    /// Stable textual key of a row: `unit@period`.
    pub fn row_key(&self, row: usize) -> String {
        format!("{}@{}", self.unit_id(row), self.period(row))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn require_column(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::ColumnNotFound(name.to_string()))
    }

    /// Row indices of each unit, in period order.
    pub fn rows_by_unit(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.units.len()];
        for (row, &u) in self.row_unit.iter().enumerate() {
            out[u].push(row);
        }
        out
    }

    /// Index of the row for `(unit, period)`, if present.
    pub fn find_row(&self, unit: usize, period: i64) -> Option<usize> {
        // rows are sorted by (unit, period)
        let start = self.row_unit.partition_point(|&u| u < unit);
        let end = self.row_unit.partition_point(|&u| u <= unit);
        self.row_period[start..end]
            .binary_search(&period)
            .ok()
            .map(|i| start + i)
    }

    /// Subset of rows; indices are deduplicated and kept in `(unit, period)`
    /// order. Units and groups without remaining rows are dropped.
    pub fn select_rows(&self, indices: &[usize]) -> Result<PanelDataset> {
        let len = self.n_rows();
        let mut idx: Vec<usize> = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
            return Err(Error::IndexOutOfRange { index: bad, len });
        }

        let used_units: BTreeSet<usize> = idx.iter().map(|&r| self.row_unit[r]).collect();
        let unit_map: HashMap<usize, usize> = used_units
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        let used_groups: BTreeSet<usize> = used_units
            .iter()
            .filter_map(|&u| self.unit_group[u])
            .collect();
        let group_map: HashMap<usize, usize> = used_groups
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();

        let units = used_units.iter().map(|&u| self.units[u].clone()).collect();
        let groups = used_groups.iter().map(|&g| self.groups[g].clone()).collect();
        let unit_group = used_units
            .iter()
            .map(|&u| self.unit_group[u].map(|g| group_map[&g]))
            .collect();
        let row_unit = idx.iter().map(|&r| unit_map[&self.row_unit[r]]).collect();
        let row_period: Vec<i64> = idx.iter().map(|&r| self.row_period[r]).collect();
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                values: idx.iter().map(|&r| c.values[r]).collect(),
            })
            .collect();
        let periods = distinct_sorted(&row_period);

        Ok(PanelDataset {
            schema: self.schema.clone(),
            units,
            groups,
            unit_group,
            row_unit,
            row_period,
            columns,
            periods,
        })
    }

    /// Rows whose period satisfies `keep`.
    pub fn filter_periods(&self, keep: impl Fn(i64) -> bool) -> Result<PanelDataset> {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&r| keep(self.period(r))).collect();
        self.select_rows(&idx)
    }

    /// Returns a copy with one more data column.
    pub fn with_column(&self, name: &str, values: Vec<f64>, role: ColumnRole) -> Result<PanelDataset> {
        if values.len() != self.n_rows() {
            return Err(Error::ShapeMismatch {
                expected: self.n_rows(),
                actual: values.len(),
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                row,
                column: name.to_string(),
            });
        }
        let mut schema = self.schema.clone();
        match role {
            ColumnRole::Outcome => schema.outcome_columns.push(name.to_string()),
            ColumnRole::Predictor => schema.predictor_columns.push(name.to_string()),
        }
        schema.validate()?;
        let mut out = self.clone();
        out.schema = schema;
        out.columns.push(Column {
            name: name.to_string(),
            values,
        });
        Ok(out)
    }

    /// Writes the dataset in the same delimited format [`load_panel`] reads.
    /// Values use the shortest representation that parses back to the same
    /// `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.schema.unit_column.clone()];
        if let Some(g) = &self.schema.group_column {
            header.push(g.clone());
        }
        header.push(self.schema.time_column.clone());
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;

        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for row in 0..self.n_rows() {
            record.clear();
            record.push(self.unit_id(row).to_string());
            if self.has_groups() {
                let g = self.group_of(row).expect("grouped panel");
                record.push(self.groups[g].clone());
            }
            record.push(self.period(row).to_string());
            for c in &self.columns {
                record.push(format!("{}", c.values[row]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn distinct_sorted(periods: &[i64]) -> Vec<i64> {
    let set: BTreeSet<i64> = periods.iter().copied().collect();
    set.into_iter().collect()
}

/// Reads a comma-separated panel with a header row.
pub fn load_panel<R: Read>(
    source: R,
    schema: &PanelSchema,
    policy: ValidationPolicy,
) -> Result<PanelDataset> {
    let records = read_records(source, schema)?;
    PanelDataset::from_records(schema.clone(), records, policy)
}

/// Scans a panel file and reports its defects without rejecting it.
/// Non-numeric cells and missing schema columns are still hard errors.
pub fn inspect_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<ValidationReport> {
    let records = read_records(source, schema)?;
    Ok(assemble(schema.clone(), records, ValidationPolicy::DropDefective)?.1)
}

fn read_records<R: Read>(source: R, schema: &PanelSchema) -> Result<Vec<RawRecord>> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let unit_idx = find(&schema.unit_column)?;
    let group_idx = schema.group_column.as_deref().map(find).transpose()?;
    let time_idx = find(&schema.time_column)?;
    let data_idx: Vec<(usize, &String)> = schema
        .data_columns()
        .map(|name| find(name).map(|i| (i, name)))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let field = |idx: usize| rec.get(idx).unwrap_or("");

        let unit = field(unit_idx).to_string();
        if unit.is_empty() {
            return Err(Error::Parse {
                row: line,
                column: schema.unit_column.clone(),
                message: "empty unit id".into(),
            });
        }
        let group = group_idx.map(|g| field(g).to_string());
        let period = parse_period(field(time_idx)).ok_or_else(|| Error::Parse {
            row: line,
            column: schema.time_column.clone(),
            message: format!("`{}` is not an integer period", field(time_idx)),
        })?;
        let mut values = Vec::with_capacity(data_idx.len());
        for &(idx, name) in &data_idx {
            let raw = field(idx);
            if raw.is_empty() {
                values.push(None);
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row: line,
                column: name.clone(),
                message: format!("`{raw}` is not a number"),
            })?;
            values.push(if v.is_finite() { Some(v) } else { None });
        }
        records.push(RawRecord {
            unit,
            group,
            period,
            values,
            line,
        });
    }
    Ok(records)
}

fn parse_period(raw: &str) -> Option<i64> {
    if let Ok(p) = raw.parse::<i64>() {
        return Some(p);
    }
    let f: f64 = raw.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

fn assemble(
    schema: PanelSchema,
    mut records: Vec<RawRecord>,
    policy: ValidationPolicy,
) -> Result<(PanelDataset, ValidationReport)> {
    schema.validate()?;
    let n_cols = schema.outcome_columns.len() + schema.predictor_columns.len();
    let col_names: Vec<String> = schema.data_columns().cloned().collect();
    let strict = policy == ValidationPolicy::Strict;
    let mut report = ValidationReport::default();

    for r in &records {
        if r.values.len() != n_cols {
            return Err(Error::ShapeMismatch {
                expected: n_cols,
                actual: r.values.len(),
            });
        }
        if schema.group_column.is_some() && r.group.as_deref().is_none_or(str::is_empty) {
            return Err(Error::Parse {
                row: r.line,
                column: schema.group_column.clone().unwrap_or_default(),
                message: "empty group id".into(),
            });
        }
    }

    // Missing cells.
    let mut keep = vec![true; records.len()];
    for (i, r) in records.iter().enumerate() {
        if let Some(c) = r.values.iter().position(Option::is_none) {
            report.missing_cells += r.values.iter().filter(|v| v.is_none()).count();
            if strict {
                return Err(Error::MissingValue {
                    row: r.line,
                    column: col_names[c].clone(),
                });
            }
            keep[i] = false;
        }
    }

    // Group consistency: the first group seen for a unit wins; a unit that
    // disagrees with itself is dropped entirely in lenient mode.
    if schema.group_column.is_some() {
        let mut first: HashMap<&str, &str> = HashMap::new();
        let mut bad: BTreeSet<String> = BTreeSet::new();
        for r in &records {
            let g = r.group.as_deref().unwrap_or_default();
            match first.get(r.unit.as_str()) {
                None => {
                    first.insert(&r.unit, g);
                }
                Some(&prev) if prev != g => {
                    if strict {
                        return Err(Error::GroupInconsistency {
                            unit: r.unit.clone(),
                            first: prev.to_string(),
                            second: g.to_string(),
                        });
                    }
                    bad.insert(r.unit.clone());
                }
                _ => {}
            }
        }
        for (i, r) in records.iter().enumerate() {
            if bad.contains(&r.unit) {
                keep[i] = false;
            }
        }
        report.group_inconsistencies = bad.into_iter().collect();
    }

    // Duplicate keys: first occurrence wins.
    let mut seen: BTreeSet<(&str, i64)> = BTreeSet::new();
    let mut dups: BTreeSet<(String, i64)> = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        if !seen.insert((r.unit.as_str(), r.period)) {
            if strict {
                return Err(Error::DuplicateKey {
                    unit: r.unit.clone(),
                    period: r.period,
                });
            }
            dups.insert((r.unit.clone(), r.period));
            keep[i] = false;
        }
    }
    report.duplicate_keys = dups.into_iter().collect();

    let mut i = 0;
    records.retain(|_| {
        let k = keep[i];
        i += 1;
        k
    });
    records.sort_by(|a, b| (a.unit.as_str(), a.period).cmp(&(b.unit.as_str(), b.period)));

    let units: Vec<String> = records
        .iter()
        .map(|r| r.unit.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let unit_pos: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let groups: Vec<String> = records
        .iter()
        .filter_map(|r| r.group.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let group_pos: HashMap<&str, usize> = groups.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut unit_group = vec![None; units.len()];
    let mut row_unit = Vec::with_capacity(records.len());
    let mut row_period = Vec::with_capacity(records.len());
    let mut columns: Vec<Column> = col_names
        .iter()
        .map(|name| Column {
            name: name.clone(),
            values: Vec::with_capacity(records.len()),
        })
        .collect();
    for r in &records {
        let u = unit_pos[r.unit.as_str()];
        unit_group[u] = r.group.as_deref().map(|g| group_pos[g]);
        row_unit.push(u);
        row_period.push(r.period);
        for (c, v) in columns.iter_mut().zip(&r.values) {
            c.values.push(v.expect("missing cells removed above"));
        }
    }
    let periods = distinct_sorted(&row_period);
    let ds = PanelDataset {
        schema,
        units,
        groups,
        unit_group,
        row_unit,
        row_period,
        columns,
        periods,
    };
    let structural = validate_panel(&ds);
    report.balanced = structural.balanced && report.is_clean();
    report.units_with_gaps = structural.units_with_gaps;
    Ok((ds, report))
}

/// Scans a dataset for structural defects. Pure; never fails.
pub fn validate_panel(ds: &PanelDataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut by_unit: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    let mut keys: BTreeSet<(usize, i64)> = BTreeSet::new();
    for row in 0..ds.n_rows() {
        let (u, p) = (ds.unit_of(row), ds.period(row));
        if !keys.insert((u, p)) {
            report.duplicate_keys.push((ds.units[u].clone(), p));
        }
        by_unit.entry(u).or_default().push(p);
    }

    for (&u, periods) in &by_unit {
        let mut ps = periods.clone();
        ps.sort_unstable();
        ps.dedup();
        let span = (ps[ps.len() - 1] - ps[0] + 1) as usize;
        if span != ps.len() {
            report.units_with_gaps.push(ds.units[u].clone());
        }
    }

    report.missing_cells = ds
        .columns
        .iter()
        .map(|c| c.values.iter().filter(|v| !v.is_finite()).count())
        .sum();

    if ds.has_groups() {
        report.group_inconsistencies = ds
            .unit_group
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_none())
            .map(|(u, _)| ds.units[u].clone())
            .collect();
    }

    let t = ds.n_periods();
    let consecutive = t > 0 && (ds.periods[t - 1] - ds.periods[0] + 1) as usize == t;
    let full = by_unit.values().all(|ps| ps.len() == t);
    report.balanced = report.is_clean() && consecutive && full && ds.n_rows() == ds.n_units() * t;
    report
}
