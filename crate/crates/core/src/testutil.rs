//! Fixtures shared by unit tests.

use crate::panel::{PanelDataset, PanelSchema, RawRecord, ValidationPolicy};

/// Balanced panel: units `u000..`, periods `1..=t`, unit `u` in group
/// `u % g`. Column `y` holds the period, `x` the unit index.
pub(crate) fn panel(n: usize, t: usize, g: usize) -> PanelDataset {
    let schema = PanelSchema {
        unit_column: "unit".into(),
        group_column: Some("group".into()),
        time_column: "period".into(),
        outcome_columns: vec!["y".into()],
        predictor_columns: vec!["x".into()],
    };
    let mut records = Vec::new();
    for u in 0..n {
        for p in 1..=t as i64 {
            records.push(RawRecord {
                unit: format!("u{u:03}"),
                group: Some(format!("g{:02}", u % g)),
                period: p,
                values: vec![Some(p as f64), Some(u as f64)],
                line: 0,
            });
        }
    }
    PanelDataset::from_records(schema, records, ValidationPolicy::Strict).unwrap()
}
