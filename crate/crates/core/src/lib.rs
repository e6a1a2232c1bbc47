//! Leakage-safe machine learning on panel data: splits, panel-aware
//! cross-validation, lag features with leakage linting, baseline learners and
//! an audit harness that measures how much leakage inflates reported
//! performance.

pub mod error;
pub mod audit;
pub mod features;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod panel;
pub mod par;
pub mod rng;
pub mod split;
pub mod synth;
pub mod cv;

#[cfg(test)]
mod testutil;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use panel::{load_panel, PanelDataset, PanelSchema, ValidationPolicy};
pub use par::Parallelism;
