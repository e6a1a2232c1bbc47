use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::linear::sigmoid;
use super::tree::{check_features, check_training, Node, TreeModel};
use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::rng::{round_half_up, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostParams {
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum hessian sum in each child.
    pub min_child_weight: f64,
    /// Minimum gain for a split.
    pub gamma: f64,
    /// L2 penalty on leaf weights.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub subsample: f64,
    pub colsample_per_tree: f64,
    pub rounds: usize,
    pub loss: Loss,
}

fn default_lambda() -> f64 {
    1.0
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_depth: 2,
            min_child_weight: 5.0,
            gamma: 1.0,
            lambda: 1.0,
            subsample: 0.5,
            colsample_per_tree: 0.8,
            rounds: 500,
            loss: Loss::Squared,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid("learning_rate must lie in (0, 1]"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(invalid("subsample must lie in (0, 1]"));
        }
        if !(self.colsample_per_tree > 0.0 && self.colsample_per_tree <= 1.0) {
            return Err(invalid("colsample_per_tree must lie in (0, 1]"));
        }
        if !(self.min_child_weight >= 0.0 && self.gamma >= 0.0 && self.lambda >= 0.0) {
            return Err(invalid("min_child_weight, gamma and lambda must be non-negative"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub loss: Loss,
    pub base_score: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<TreeModel>,
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    pub fn raw_row(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    /// Margins for squared loss, probabilities for logistic loss.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(self.n_features(), x)?;
        Ok((0..x.nrows())
            .map(|r| {
                let raw = self.raw_row(x.row(r));
                match self.loss {
                    Loss::Squared => raw,
                    Loss::Logistic => sigmoid(raw),
                }
            })
            .collect())
    }
}

/// Mean training loss: half squared error, or logistic deviance / 2.
pub fn training_loss(loss: Loss, raw: &[f64], y: &[f64]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(y)
        .map(|(&f, &t)| match loss {
            Loss::Squared => 0.5 * (f - t) * (f - t),
            Loss::Logistic => {
                let p = sigmoid(f).clamp(1e-300, 1.0 - 1e-16);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            }
        })
        .sum();
    total / y.len() as f64
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Gradient-boosted regression trees with second-order split gain.
/// Trees are grown level by level with an exact search over a presorted
/// index; each round draws its row and column subsamples from one seeded
/// stream.
pub fn fit_gbt(x: &Matrix, y: &[f64], params: &BoostParams, seed: u64) -> Result<BoostedModel> {
    params.validate()?;
    check_training(x, y)?;
    let (n, p) = (x.nrows(), x.ncols());
    let base_score = match params.loss {
        Loss::Squared => y.iter().sum::<f64>() / n as f64,
        Loss::Logistic => {
            super::check_binary(y)?;
            let prev = y.iter().sum::<f64>() / n as f64;
            (prev / (1.0 - prev)).ln()
        }
    };
    let order: Vec<Vec<u32>> = (0..p)
        .map(|f| {
            let mut o: Vec<u32> = (0..n as u32).collect();
            o.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
            o
        })
        .collect();

    let mut rng = seeded(seed);
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut node_of = vec![-1i32; n];
    let n_rows = if params.subsample < 1.0 {
        round_half_up(params.subsample * n as f64).clamp(1, n)
    } else {
        n
    };
    let n_cols = ((params.colsample_per_tree * p as f64).floor() as usize).clamp(1, p.max(1));
    let mut trees = Vec::with_capacity(params.rounds);

    for _ in 0..params.rounds {
        for i in 0..n {
            match params.loss {
                Loss::Squared => {
                    grad[i] = raw[i] - y[i];
                    hess[i] = 1.0;
                }
                Loss::Logistic => {
                    let q = sigmoid(raw[i]);
                    grad[i] = q - y[i];
                    hess[i] = q * (1.0 - q);
                }
            }
        }
        node_of.iter_mut().for_each(|v| *v = -1);
        if n_rows < n {
            for r in sample(&mut rng, n, n_rows) {
                node_of[r] = 0;
            }
        } else {
            node_of.iter_mut().for_each(|v| *v = 0);
        }
        let features: Vec<usize> = if n_cols < p {
            let mut f = sample(&mut rng, p, n_cols).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..p).collect()
        };
        let tree = grow_level_wise(x, &order, &features, &grad, &hess, &mut node_of, params);
        for (r, v) in raw.iter_mut().enumerate() {
            *v += tree.predict_row(x.row(r));
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        loss: params.loss,
        base_score,
        trees,
    })
}

fn grow_level_wise(
    x: &Matrix,
    order: &[Vec<u32>],
    features: &[usize],
    grad: &[f64],
    hess: &[f64],
    node_of: &mut [i32],
    params: &BoostParams,
) -> TreeModel {
    let lambda = params.lambda;
    let mut nodes = vec![Node::Leaf { value: 0.0, samples: 0 }];
    // Per node: gradient sum, hessian sum, row count.
    let mut stats = vec![(0.0, 0.0, 0usize)];
    for (r, &k) in node_of.iter().enumerate() {
        if k == 0 {
            stats[0].0 += grad[r];
            stats[0].1 += hess[r];
            stats[0].2 += 1;
        }
    }
    let mut open: Vec<usize> = vec![0];
    let score = |g: f64, h: f64| g * g / (h + lambda);
    for _ in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let mut local = vec![usize::MAX; nodes.len()];
        for (l, &k) in open.iter().enumerate() {
            local[k] = l;
        }
        let m = open.len();
        let mut best: Vec<Option<Candidate>> = (0..m).map(|_| None).collect();
        let mut gl = vec![0.0; m];
        let mut hl = vec![0.0; m];
        let mut last = vec![f64::NAN; m];
        for &f in features {
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &r in &order[f] {
                let r = r as usize;
                let k = node_of[r];
                if k < 0 {
                    continue;
                }
                let l = local[k as usize];
                if l == usize::MAX {
                    continue;
                }
                let xv = x.get(r, f);
                if xv > last[l] {
                    let (g, h, _) = stats[open[l]];
                    let (gr, hr) = (g - gl[l], h - hl[l]);
                    if hl[l] >= params.min_child_weight && hr >= params.min_child_weight {
                        let gain = 0.5 * (score(gl[l], hl[l]) + score(gr, hr) - score(g, h));
                        if gain > params.gamma && best[l].as_ref().is_none_or(|b| gain > b.gain) {
                            let prev = last[l];
                            let mut threshold = prev + (xv - prev) / 2.0;
                            if threshold >= xv {
                                threshold = prev;
                            }
                            best[l] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                            });
                        }
                    }
                }
                gl[l] += grad[r];
                hl[l] += hess[r];
                last[l] = xv;
            }
        }
        let mut next_open = Vec::new();
        // child ids by local index
        let mut children = vec![(0usize, 0usize); m];
        for (l, cand) in best.iter().enumerate() {
            let Some(c) = cand else { continue };
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0, samples: 0 });
            nodes.push(Node::Leaf { value: 0.0, samples: 0 });
            stats.push((0.0, 0.0, 0));
            stats.push((0.0, 0.0, 0));
            nodes[open[l]] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
            };
            children[l] = (left, right);
            next_open.push(left);
            next_open.push(right);
        }
        if next_open.is_empty() {
            break;
        }
        for (r, k) in node_of.iter_mut().enumerate() {
            if *k < 0 {
                continue;
            }
            let l = local[*k as usize];
            if l == usize::MAX {
                continue;
            }
            let Some(c) = &best[l] else { continue };
            let child = if x.get(r, c.feature) <= c.threshold {
                children[l].0
            } else {
                children[l].1
            };
            *k = child as i32;
            stats[child].0 += grad[r];
            stats[child].1 += hess[r];
            stats[child].2 += 1;
        }
        open = next_open;
    }
    for (i, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value, samples } = node {
            let (g, h, c) = stats[i];
            *value = if h + lambda > 0.0 {
                -g / (h + lambda) * params.learning_rate
            } else {
                0.0
            };
            *samples = c;
        }
    }
    TreeModel {
        n_features: x.ncols(),
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> BoostParams {
        BoostParams {
            learning_rate: 1.0,
            max_depth: 3,
            min_child_weight: 0.0,
            gamma: 0.0,
            lambda: 0.0,
            subsample: 1.0,
            colsample_per_tree: 1.0,
            rounds: 1,
            loss: Loss::Squared,
        }
    }

    #[test]
    fn defaults() {
        let d = BoostParams::default();
        assert_eq!(d.learning_rate, 0.01);
        assert_eq!(d.max_depth, 2);
        assert_eq!(d.min_child_weight, 5.0);
        assert_eq!(d.gamma, 1.0);
        assert_eq!(d.subsample, 0.5);
        assert_eq!(d.colsample_per_tree, 0.8);
        assert_eq!(d.rounds, 500);
    }

    #[test]
    fn fits_step_exactly() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [1.0, 1.0, 5.0, 5.0];
        let m = fit_gbt(&x, &y, &exact(), 0).unwrap();
        assert_eq!(m.base_score, 3.0);
        let p = m.predict(&x).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_probabilities() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..20).map(|i| if i % 3 == 0 || i > 14 { 1.0 } else { 0.0 }).collect();
        let params = BoostParams {
            loss: Loss::Logistic,
            rounds: 50,
            learning_rate: 0.3,
            lambda: 1.0,
            ..exact()
        };
        let m = fit_gbt(&x, &y, &params, 3).unwrap();
        assert!(m.predict(&x).unwrap().iter().all(|&v| v > 0.0 && v < 1.0));
        let bad = [0.0, 2.0].repeat(10);
        assert!(fit_gbt(&x, &bad, &params, 3).is_err());
    }

    #[test]
    fn invalid_params() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        for p in [
            BoostParams { learning_rate: 0.0, ..exact() },
            BoostParams { subsample: 1.5, ..exact() },
            BoostParams { colsample_per_tree: 0.0, ..exact() },
            BoostParams { rounds: 0, ..exact() },
        ] {
            assert!(fit_gbt(&x, &[0.0, 1.0], &p, 0).is_err());
        }
    }
}
