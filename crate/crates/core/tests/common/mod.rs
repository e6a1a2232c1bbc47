#![allow(dead_code)]

use panelaudit::panel::RawRecord;
use panelaudit::{PanelDataset, PanelSchema, ValidationPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Balanced panel with units `u000..`, periods `1..=t` and unit `u` in group
/// `u % g`. Column `code` is `1000 * unit + period`; `y` and `x` are uniform
/// draws from `seed`.
pub fn panel(n: usize, t: usize, g: usize, seed: u64) -> PanelDataset {
    let schema = PanelSchema {
        unit_column: "unit".into(),
        group_column: Some("group".into()),
        time_column: "period".into(),
        outcome_columns: vec!["y".into()],
        predictor_columns: vec!["x".into(), "code".into()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for u in 0..n {
        for p in 1..=t as i64 {
            records.push(RawRecord {
                unit: format!("u{u:03}"),
                group: Some(format!("g{:02}", u % g)),
                period: p,
                values: vec![Some(rng.random()), Some(rng.random()), Some((1000 * u) as f64 + p as f64)],
                line: 0,
            });
        }
    }
    PanelDataset::from_records(schema, records, ValidationPolicy::Strict).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}
