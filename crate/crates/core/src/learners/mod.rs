//! Baseline learners: OLS, logistic regression, CART, random forest and
//! gradient-boosted trees.

mod forest;
mod gbt;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use gbt::{fit_gbt, training_loss, BoostParams, BoostedModel, Loss};
pub use linear::{
    fit_logistic, fit_ols, logistic_gradient, logistic_loglik, sigmoid, Family, LinearModel, LogisticParams,
};
pub use tree::{fit_cart, fit_cart_rows, split_cost, Criterion, FeatureSubsample, Node, TreeModel, TreeParams};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Regression,
    Classification,
}

pub(crate) fn check_binary(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("binary outcome must be coded 0/1"));
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Any fitted model, serialized with a `model` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub values: Vec<f64>,
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn predict(model: &Model, x: &Matrix) -> Result<Prediction> {
    let values = match model {
        Model::Linear(m) => m.predict(x)?,
        Model::Tree(m) => m.predict(x)?,
        Model::Forest(m) => m.predict(x)?,
        Model::Boosted(m) => m.predict(x)?,
    };
    Ok(Prediction { values })
}
