//! Ridge-penalized weighted logistic regression fit by iteratively reweighted
//! least squares (Newton's method with step halving).
//!
//! The first design column is the intercept and is never penalized.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(n_cols: usize) -> Self {
        Design { n_rows: 0, n_cols, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut d = Design::new(n_cols);
        for r in rows {
            d.push_row(r);
        }
        d
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "design row has wrong width");
        self.data.extend_from_slice(row);
        self.n_rows += 1;
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IrlsOptions {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions { ridge: 1e-4, tol: 1e-8, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the objective gradient at the returned coefficients.
    pub gradient_norm: f64,
    pub converged: bool,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn linear(row: &[f64], beta: &[f64]) -> f64 {
    row.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Weighted negative log-likelihood plus `ridge/2 * |beta[1..]|^2`.
pub fn penalized_objective(x: &Design, labels: &[f64], weights: &[f64], ridge: f64, beta: &[f64]) -> f64 {
    let nll: f64 = (0..x.n_rows())
        .map(|i| {
            let eta = linear(x.row(i), beta);
            weights[i] * (log1p_exp(eta) - labels[i] * eta)
        })
        .sum();
    nll + 0.5 * ridge * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
}

/// Analytic gradient of [`penalized_objective`].
pub fn penalized_gradient(x: &Design, labels: &[f64], weights: &[f64], ridge: f64, beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.n_cols()];
    for i in 0..x.n_rows() {
        let row = x.row(i);
        let r = weights[i] * (sigmoid(linear(row, beta)) - labels[i]);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    for (gj, bj) in g.iter_mut().zip(beta).skip(1) {
        *gj += ridge * bj;
    }
    g
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Fit a weighted logistic regression with labels in `[0, 1]`.
///
/// Converges when the gradient max-norm, divided by `max(1, total weight)`,
/// drops below `opts.tol`, or when a Newton step can no longer decrease the
/// objective. Hitting `max_iter` first leaves `converged == false`.
pub fn irls_weighted_logistic(x: &Design, labels: &[f64], weights: &[f64], opts: IrlsOptions) -> Result<GlmFit> {
    let n = x.n_rows();
    let p = x.n_cols();
    if labels.len() != n || weights.len() != n {
        return Err(Error::Precondition(format!(
            "design has {n} rows but {} labels and {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if p == 0 {
        return Err(Error::Precondition("design has no columns".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Precondition(format!("sample weight {w} is negative or not finite")));
    }
    if let Some(y) = labels.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::Precondition(format!("label {y} outside [0, 1]")));
    }
    if opts.ridge < 0.0 {
        return Err(Error::Precondition("ridge must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Precondition("at least one sample weight must be positive".into()));
    }
    let scale = total.max(1.0);

    let mut beta = vec![0.0; p];
    let mut objective = penalized_objective(x, labels, weights, opts.ridge, &beta);
    let mut grad = penalized_gradient(x, labels, weights, opts.ridge, &beta);
    let mut iterations = 0;
    let mut converged = max_norm(&grad) / scale < opts.tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let row = x.row(i);
            let mu = sigmoid(linear(row, &beta));
            let w = weights[i] * mu * (1.0 - mu);
            if w == 0.0 {
                continue;
            }
            for a in 0..p {
                let wa = w * row[a];
                if wa == 0.0 {
                    continue;
                }
                for b in a..p {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
            if a > 0 {
                h[(a, a)] += opts.ridge;
            }
        }
        let chol = h.cholesky().ok_or_else(|| {
            Error::Numerical(format!("working matrix is singular at iteration {iterations}"))
        })?;
        let step = chol.solve(&(-DVector::from_column_slice(&grad)));

        // step halving until the objective does not increase
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let obj = penalized_objective(x, labels, weights, opts.ridge, &candidate);
            if obj.is_finite() && obj <= objective {
                accepted = Some((candidate, obj));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, obj)) = accepted else {
            // no descent possible at working precision
            converged = true;
            break;
        };
        let improvement = objective - obj;
        beta = candidate;
        objective = obj;
        grad = penalized_gradient(x, labels, weights, opts.ridge, &beta);
        // a zero-length accepted step means we are stationary at working precision
        converged = max_norm(&grad) / scale < opts.tol || improvement <= 0.0;
    }

    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("non-finite coefficients".into()));
    }
    Ok(GlmFit { gradient_norm: max_norm(&grad), coefficients: beta, iterations, converged })
}

/// Fitted probability for one design row.
pub fn predict_row(beta: &[f64], row: &[f64]) -> f64 {
    sigmoid(linear(row, beta))
}
