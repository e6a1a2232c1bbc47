use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Features considered at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    All,
    /// max(1, floor(sqrt(p))) features drawn without replacement per node.
    Sqrt,
}

impl FeatureSubsample {
    pub fn count(self, p: usize) -> usize {
        match self {
            FeatureSubsample::All => p,
            FeatureSubsample::Sqrt => ((p as f64).sqrt().floor() as usize).max(1).min(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Gini impurity; requires 0/1 labels.
    Gini,
    /// Sum of squared deviations from the node mean.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    /// `None` grows until the sample-size rules stop it.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub feature_subsample: FeatureSubsample,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 4,
            min_samples_split: 10,
            feature_subsample: FeatureSubsample::Sqrt,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(invalid("min_samples_split must be at least 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn leaf(n_features: usize, value: f64, samples: usize) -> Self {
        Self {
            n_features,
            nodes: vec![Node::Leaf { value, samples }],
        }
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(self.n_features, x)?;
        Ok((0..x.nrows()).map(|r| self.predict_row(x.row(r))).collect())
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, samples } => Some((value, samples)),
            Node::Split { .. } => None,
        })
    }
}

pub(crate) fn check_features(expected: usize, x: &Matrix) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: x.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_training(x: &Matrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyPartition("no training rows".into()));
    }
    if !x.as_slice().iter().chain(y).all(|v| v.is_finite()) {
        return Err(invalid("training data contains non-finite values"));
    }
    Ok(())
}

/// Impurity of a node with `n` rows, label sum `s` and squared sum `ss`,
/// scaled by `n` so child impurities add.
#[inline]
fn node_cost(criterion: Criterion, n: f64, s: f64, ss: f64) -> f64 {
    match criterion {
        Criterion::Variance => ss - s * s / n,
        // n * (1 - p^2 - (1-p)^2) with p = s / n
        Criterion::Gini => 2.0 * (s - s * s / n),
    }
}

/// Weighted impurity of a candidate split; the quantity minimized.
pub fn split_cost(criterion: Criterion, left: &[f64], right: &[f64]) -> f64 {
    let cost = |ys: &[f64]| {
        if ys.is_empty() {
            return 0.0;
        }
        let s: f64 = ys.iter().sum();
        let ss: f64 = ys.iter().map(|v| v * v).sum();
        node_cost(criterion, ys.len() as f64, s, ss)
    };
    cost(left) + cost(right)
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Fits a CART tree on `rows` of `x` (repeats allowed, as in a bootstrap).
pub fn fit_cart_rows(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    criterion: Criterion,
    rng: &mut Rng,
) -> Result<TreeModel> {
    params.validate()?;
    check_training(x, y)?;
    if rows.is_empty() {
        return Err(Error::EmptyPartition("no training rows".into()));
    }
    if criterion == Criterion::Gini && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("Gini criterion requires 0/1 labels"));
    }
    let p = x.ncols();
    let k = params.feature_subsample.count(p);
    let mut idx = rows.to_vec();
    let mut nodes: Vec<Node> = Vec::new();
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    nodes.push(Node::Leaf { value: 0.0, samples: 0 });
    // (node, lo, hi, depth)
    let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
    while let Some((node, lo, hi, depth)) = stack.pop() {
        let n = hi - lo;
        let (s, ss) = idx[lo..hi]
            .iter()
            .fold((0.0, 0.0), |(s, ss), &r| (s + y[r], ss + y[r] * y[r]));
        let nf = n as f64;
        let parent = node_cost(criterion, nf, s, ss);
        nodes[node] = Node::Leaf {
            value: s / nf,
            samples: n,
        };
        let can_split = n >= params.min_samples_split
            && n >= 2 * params.min_samples_leaf
            && params.max_depth.is_none_or(|d| depth < d)
            && parent > 0.0
            && p > 0;
        if !can_split {
            continue;
        }
        let features: Vec<usize> = if k == p {
            (0..p).collect()
        } else {
            let mut f = sample(rng, p, k).into_vec();
            f.sort_unstable();
            f
        };
        let min_gain = parent * 1e-12;
        let mut best: Option<Best> = None;
        for &f in &features {
            pairs.clear();
            pairs.extend(idx[lo..hi].iter().map(|&r| (x.get(r, f), y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut ls, mut lss) = (0.0, 0.0);
            for i in 0..n - 1 {
                let (xv, yv) = pairs[i];
                ls += yv;
                lss += yv * yv;
                let nl = i + 1;
                if nl < params.min_samples_leaf {
                    continue;
                }
                if n - nl < params.min_samples_leaf {
                    break;
                }
                let next = pairs[i + 1].0;
                if next <= xv {
                    continue;
                }
                let cost = node_cost(criterion, nl as f64, ls, lss)
                    + node_cost(criterion, (n - nl) as f64, s - ls, ss - lss);
                let gain = parent - cost;
                if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = xv + (next - xv) / 2.0;
                    if threshold >= next {
                        threshold = xv;
                    }
                    best = Some(Best {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        let Some(best) = best else { continue };
        let mut mid = lo;
        for i in lo..hi {
            if x.get(idx[i], best.feature) <= best.threshold {
                idx.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        let right = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        nodes[node] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        stack.push((right, mid, hi, depth + 1));
        stack.push((left, lo, mid, depth + 1));
    }
    Ok(TreeModel { n_features: p, nodes })
}

/// Fits a CART tree on all rows.
pub fn fit_cart(x: &Matrix, y: &[f64], params: &TreeParams, criterion: Criterion, rng: &mut Rng) -> Result<TreeModel> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    fit_cart_rows(x, y, &rows, params, criterion, rng)
}
