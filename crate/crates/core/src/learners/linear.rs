use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub family: Family,
    pub converged: bool,
    pub iterations: usize,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn linear_predictor(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::ShapeMismatch {
                expected: self.coefficients.len(),
                actual: x.ncols(),
            });
        }
        Ok((0..x.nrows())
            .map(|r| self.intercept + dot(x.row(r), &self.coefficients))
            .collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let mut eta = self.linear_predictor(x)?;
        if self.family == Family::Binomial {
            eta.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        Ok(eta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function, evaluated without overflow for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Column-major design with a leading intercept column.
struct Design {
    n: usize,
    p: usize,
    cols: Vec<Vec<f64>>,
}

impl Design {
    fn with_intercept(x: &Matrix) -> Self {
        let mut cols = Vec::with_capacity(x.ncols() + 1);
        cols.push(vec![1.0; x.nrows()]);
        for c in 0..x.ncols() {
            cols.push(x.column(c));
        }
        Self {
            n: x.nrows(),
            p: x.ncols() + 1,
            cols,
        }
    }

    fn name(j: usize) -> String {
        if j == 0 {
            "intercept".into()
        } else {
            format!("x{}", j - 1)
        }
    }
}

/// Least squares by Householder QR. `a` holds columns, `b` the response;
/// both are consumed. Columns whose residual norm after projection on the
/// earlier columns is negligible are reported by index.
fn householder_lstsq(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, n: usize) -> std::result::Result<Vec<f64>, Vec<usize>> {
    let p = a.len();
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut diag = vec![0.0; p];
    let mut dependent = Vec::new();
    let mut k = 0;
    for j in 0..p {
        if k >= n {
            dependent.push(j);
            continue;
        }
        let alpha_norm = a[j][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha_norm <= 1e-10 * norms[j] || alpha_norm == 0.0 {
            dependent.push(j);
            continue;
        }
        let alpha = if a[j][k] > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = a[j][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let s = 2.0 * dot(&v, &col[k..]) / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        };
        for col in a.iter_mut().skip(j + 1) {
            reflect(col);
        }
        reflect(&mut b);
        a[j][k] = alpha;
        diag[j] = alpha;
        k += 1;
    }
    if !dependent.is_empty() {
        return Err(dependent);
    }
    // Full rank: row i of R is column i's pivot.
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for (j, bj) in beta.iter().enumerate().skip(i + 1) {
            s -= a[j][i] * bj;
        }
        beta[i] = s / diag[i];
    }
    Ok(beta)
}

fn check_finite(x: &Matrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyPartition("no training rows".into()));
    }
    if !x.as_slice().iter().chain(y).all(|v| v.is_finite()) {
        return Err(invalid("design contains non-finite values"));
    }
    Ok(())
}

fn rank_error(dependent: Vec<usize>) -> Error {
    Error::RankDeficient(dependent.into_iter().map(Design::name).collect())
}

/// Ordinary least squares with an intercept.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    check_finite(x, y)?;
    let d = Design::with_intercept(x);
    if d.n < d.p {
        return Err(invalid(format!("{} rows cannot identify {} coefficients", d.n, d.p)));
    }
    let beta = householder_lstsq(d.cols, y.to_vec(), d.n).map_err(rank_error)?;
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        family: Family::Gaussian,
        converged: true,
        iterations: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Gradient of the mean Bernoulli log-likelihood, intercept first.
pub fn logistic_gradient(x: &Matrix, y: &[f64], intercept: f64, coefficients: &[f64]) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut g = vec![0.0; coefficients.len() + 1];
    for r in 0..x.nrows() {
        let row = x.row(r);
        let eta = intercept + dot(row, coefficients);
        let resid = residual(y[r], eta);
        g[0] += resid;
        for (gj, xj) in g[1..].iter_mut().zip(row) {
            *gj += resid * xj;
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// Mean Bernoulli log-likelihood.
pub fn logistic_loglik(x: &Matrix, y: &[f64], intercept: f64, coefficients: &[f64]) -> f64 {
    let total: f64 = (0..x.nrows())
        .map(|r| {
            let eta = intercept + dot(x.row(r), coefficients);
            // log sigmoid(eta) = -softplus(-eta)
            y[r] * -softplus(-eta) + (1.0 - y[r]) * -softplus(eta)
        })
        .sum();
    total / x.nrows() as f64
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// y - sigmoid(eta), computed without cancellation near saturation.
fn residual(y: f64, eta: f64) -> f64 {
    if y == 1.0 {
        sigmoid(-eta)
    } else {
        -sigmoid(eta)
    }
}

/// Logistic regression by iteratively reweighted least squares. Each Newton
/// step is solved as a weighted least-squares problem by QR. Converged when
/// the gradient of the mean log-likelihood is within `tol` and the step has
/// stopped moving; otherwise returns the last iterate with `converged=false`.
pub fn fit_logistic(x: &Matrix, y: &[f64], params: LogisticParams) -> Result<LinearModel> {
    check_finite(x, y)?;
    super::check_binary(y)?;
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(invalid("tol must be positive and max_iter at least 1"));
    }
    let d = Design::with_intercept(x);
    if d.n < d.p {
        return Err(invalid(format!("{} rows cannot identify {} coefficients", d.n, d.p)));
    }
    let mut beta = vec![0.0; d.p];
    let mut converged = false;
    let mut iterations = 0;
    let mut eta = vec![0.0; d.n];
    while iterations < params.max_iter {
        iterations += 1;
        let mut wa = vec![vec![0.0; d.n]; d.p];
        let mut z = vec![0.0; d.n];
        for i in 0..d.n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let sw = w.sqrt();
            for j in 0..d.p {
                wa[j][i] = d.cols[j][i] * sw;
            }
            z[i] = residual(y[i], eta[i]) / sw;
        }
        let step = householder_lstsq(wa, z, d.n).map_err(rank_error)?;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        for (i, e) in eta.iter_mut().enumerate() {
            *e = (0..d.p).map(|j| d.cols[j][i] * beta[j]).sum();
        }
        let grad = logistic_gradient(x, y, beta[0], &beta[1..]);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let step_max = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let beta_max = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if grad_norm <= params.tol && step_max <= 1e-6 * (1.0 + beta_max) {
            converged = true;
            break;
        }
    }
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        family: Family::Binomial,
        converged,
        iterations,
    })
}
