use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{check_features, check_training, fit_cart_rows, Criterion, TreeModel, TreeParams};
use super::Objective;
use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::par::{map_indexed, Parallelism};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    /// Execution only; does not affect the fitted model.
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            tree: TreeParams::default(),
            bootstrap: true,
            parallelism: Parallelism::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub objective: Objective,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    /// Mean of the trees' outputs; for classification this is the mean leaf
    /// class fraction.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(self.n_features(), x)?;
        let k = self.trees.len() as f64;
        Ok((0..x.nrows())
            .map(|r| {
                let row = x.row(r);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
            })
            .collect())
    }
}

/// Random forest. Tree `i` draws its bootstrap sample and its per-node
/// feature subsets from stream `i` of `seed`, so the fit does not depend on
/// scheduling.
pub fn fit_random_forest(
    x: &Matrix,
    y: &[f64],
    params: &ForestParams,
    seed: u64,
    objective: Objective,
) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(invalid("n_trees must be at least 1"));
    }
    params.tree.validate()?;
    check_training(x, y)?;
    let criterion = match objective {
        Objective::Classification => {
            super::check_binary(y)?;
            Criterion::Gini
        }
        Objective::Regression => Criterion::Variance,
    };
    let n = x.nrows();
    let trees = map_indexed(params.n_trees, params.parallelism, |i| {
        let mut rng = stream(seed, i as u64);
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        fit_cart_rows(x, y, &rows, &params.tree, criterion, &mut rng)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { objective, trees })
}
