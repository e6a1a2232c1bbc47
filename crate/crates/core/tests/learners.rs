mod common;

use common::{normal, rng};
use panelaudit::learners::{
    fit_cart, fit_gbt, fit_logistic, fit_ols, fit_random_forest, logistic_gradient, predict, BoostParams, Criterion,
    FeatureSubsample, ForestParams, LogisticParams, Loss, Model, Node, Objective, TreeParams,
};
use panelaudit::{Matrix, Parallelism};
use rand::Rng;

fn random_matrix(r: &mut rand_chacha::ChaCha8Rng, n: usize, p: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| normal(r)).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Gaussian elimination with partial pivoting on the normal equations.
fn normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let (n, p) = (x.nrows(), x.ncols() + 1);
    let design = |r: usize, c: usize| if c == 0 { 1.0 } else { x.get(r, c - 1) };
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..n).map(|r| design(r, i) * design(r, j)).sum();
        }
        a[i][p] = (0..n).map(|r| design(r, i) * y[r]).sum();
    }
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for k in col..=p {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| a[i][k] * beta[k]).sum();
        beta[i] = (a[i][p] - s) / a[i][i];
    }
    beta
}

#[test]
fn ols_matches_normal_equations() {
    let mut r = rng(101);
    for _ in 0..100 {
        let n = r.random_range(20..80);
        let p = r.random_range(1..6);
        let x = random_matrix(&mut r, n, p);
        let y: Vec<f64> = (0..n).map(|_| 3.0 * normal(&mut r)).collect();
        let model = fit_ols(&x, &y).unwrap();
        let beta = normal_equations(&x, &y);
        assert!((model.intercept - beta[0]).abs() < 1e-8);
        for (c, b) in model.coefficients.iter().zip(&beta[1..]) {
            assert!((c - b).abs() < 1e-8, "{c} vs {b}");
        }
    }
}

fn naive_loglik(x: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for r in 0..x.nrows() {
        let eta = beta[0] + (0..x.ncols()).map(|j| beta[j + 1] * x.get(r, j)).sum::<f64>();
        let p = 1.0 / (1.0 + (-eta).exp());
        total += if y[r] == 1.0 { p.ln() } else { (1.0 - p).ln() };
    }
    total / x.nrows() as f64
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut r = rng(202);
    for _ in 0..50 {
        let n = r.random_range(10..60);
        let p = r.random_range(1..5);
        let x = random_matrix(&mut r, n, p);
        let y: Vec<f64> = (0..n).map(|_| f64::from(r.random_bool(0.4))).collect();
        let beta: Vec<f64> = (0..=p).map(|_| 0.5 * normal(&mut r)).collect();
        let g = logistic_gradient(&x, &y, beta[0], &beta[1..]);
        let h = 1e-5;
        for j in 0..=p {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (naive_loglik(&x, &y, &up) - naive_loglik(&x, &y, &down)) / (2.0 * h);
            let rel = (g[j] - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-4, "component {j}: analytic {} vs fd {fd}", g[j]);
        }
    }
}

#[test]
fn logistic_fit_zeroes_gradient() {
    let mut r = rng(303);
    let x = random_matrix(&mut r, 400, 3);
    let y: Vec<f64> = (0..400)
        .map(|i| {
            let eta = 0.3 + x.get(i, 0) - 0.5 * x.get(i, 2);
            f64::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let m = fit_logistic(&x, &y, LogisticParams::default()).unwrap();
    assert!(m.converged);
    let g = logistic_gradient(&x, &y, m.intercept, &m.coefficients);
    assert!(g.iter().all(|v| v.abs() < 1e-8));
}

fn gini_cost(ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    let n = ys.len() as f64;
    let p = ys.iter().filter(|&&v| v == 1.0).count() as f64 / n;
    n * (1.0 - p * p - (1.0 - p) * (1.0 - p))
}

/// Best single split by exhaustive search over features and midpoints.
fn best_stump<F: Fn(&[f64], &[f64]) -> f64>(x: &Matrix, y: &[f64], cost: F) -> Option<(f64, usize, f64)> {
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f);
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut l, mut r) = (vec![], vec![]);
            for (i, &yi) in y.iter().enumerate() {
                if x.get(i, f) <= t {
                    l.push(yi)
                } else {
                    r.push(yi)
                }
            }
            let c = cost(&l, &r);
            if best.is_none_or(|b| c < b.0) {
                best = Some((c, f, t));
            }
        }
    }
    best
}

#[test]
fn gini_root_split_is_optimal() {
    let mut r = rng(404);
    let params = TreeParams {
        max_depth: Some(1),
        min_samples_leaf: 1,
        min_samples_split: 2,
        feature_subsample: FeatureSubsample::All,
    };
    for _ in 0..200 {
        let n = r.random_range(4..30);
        let p = r.random_range(1..4);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| f64::from(r.random_range(0..6u8))).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..n).map(|_| f64::from(r.random_bool(0.5))).collect();
        let tree = fit_cart(&x, &y, &params, Criterion::Gini, &mut rng(1)).unwrap();
        let parent = gini_cost(&y);
        let oracle = best_stump(&x, &y, |l, r| gini_cost(l) + gini_cost(r));
        match (&tree.nodes[0], oracle) {
            (Node::Split { feature, threshold, .. }, Some((best, _, _))) => {
                let (mut l, mut rr) = (vec![], vec![]);
                for i in 0..n {
                    if x.get(i, *feature) <= *threshold {
                        l.push(y[i])
                    } else {
                        rr.push(y[i])
                    }
                }
                assert!((gini_cost(&l) + gini_cost(&rr) - best).abs() < 1e-12);
                assert!(best < parent);
            }
            (Node::Leaf { .. }, oracle) => {
                assert!(oracle.is_none_or(|(best, _, _)| best >= parent - 1e-9 * parent.max(1.0)));
            }
            (Node::Split { .. }, None) => panic!("split found where none exists"),
        }
    }
}

#[test]
fn gbt_single_round_matches_stump_oracle() {
    let mut r = rng(505);
    let params = BoostParams {
        learning_rate: 1.0,
        max_depth: 1,
        min_child_weight: 0.0,
        gamma: 0.0,
        lambda: 0.0,
        subsample: 1.0,
        colsample_per_tree: 1.0,
        rounds: 1,
        loss: Loss::Squared,
    };
    for _ in 0..100 {
        let n = r.random_range(5..40);
        let p = r.random_range(1..4);
        let x = random_matrix(&mut r, n, p);
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
        // minimizing within-side squared error maximizes the second-order gain
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
        };
        let (_, f, t) = best_stump(&x, &resid, |l, r| sse(l) + sse(r)).unwrap();
        let model = fit_gbt(&x, &y, &params, 9).unwrap();
        let side = |i: usize| x.get(i, f) <= t;
        let side_mean = |s: bool| {
            let v: Vec<f64> = (0..n).filter(|&i| side(i) == s).map(|i| resid[i]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let got = model.predict(&x).unwrap();
        for (i, g) in got.iter().enumerate() {
            assert!((g - (mean + side_mean(side(i)))).abs() < 1e-10);
        }
    }
}

#[test]
fn forest_prediction_is_mean_of_trees() {
    let mut r = rng(606);
    let x = random_matrix(&mut r, 120, 4);
    let y: Vec<f64> = (0..120).map(|i| x.get(i, 0) + 0.1 * normal(&mut r)).collect();
    let params = ForestParams {
        n_trees: 25,
        ..Default::default()
    };
    let forest = fit_random_forest(&x, &y, &params, 3, Objective::Regression).unwrap();
    let got = forest.predict(&x).unwrap();
    for (i, g) in got.iter().enumerate() {
        let mean = forest.trees.iter().map(|t| t.predict_row(x.row(i))).sum::<f64>() / 25.0;
        assert!((g - mean).abs() < 1e-12);
    }
}

#[test]
fn models_round_trip_through_json() {
    let mut r = rng(707);
    let x = random_matrix(&mut r, 80, 3);
    let y: Vec<f64> = (0..80).map(|i| f64::from(x.get(i, 0) + 0.5 * normal(&mut r) > 0.0)).collect();
    let forest_params = ForestParams {
        n_trees: 5,
        parallelism: Parallelism::Sequential,
        ..Default::default()
    };
    let boost_params = BoostParams {
        rounds: 20,
        loss: Loss::Logistic,
        ..Default::default()
    };
    let tree_params = TreeParams::default();
    let models = vec![
        Model::Linear(fit_logistic(&x, &y, LogisticParams::default()).unwrap()),
        Model::Tree(fit_cart(&x, &y, &tree_params, Criterion::Gini, &mut rng(2)).unwrap()),
        Model::Forest(fit_random_forest(&x, &y, &forest_params, 4, Objective::Classification).unwrap()),
        Model::Boosted(fit_gbt(&x, &y, &boost_params, 5).unwrap()),
    ];
    for m in models {
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let a = predict(&m, &x).unwrap().values;
        let b = predict(&back, &x).unwrap().values;
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn learners_reject_bad_input() {
    let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let single = [1.0, 1.0, 1.0];
    assert!(fit_logistic(&x, &single, LogisticParams::default()).is_err());
    assert!(fit_logistic(&x, &[0.0, 2.0, 1.0], LogisticParams::default()).is_err());
    assert!(fit_ols(&x, &[1.0, 2.0]).is_err());
    let dup = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]]).unwrap();
    let err = fit_ols(&dup, &[1.0, 2.0, 3.0, 5.0]).unwrap_err();
    assert!(matches!(err, panelaudit::Error::RankDeficient(_)));
}
