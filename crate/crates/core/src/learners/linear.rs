//! Linear models: ridge (closed form), lasso and elastic net (coordinate descent).

use serde::{Deserialize, Serialize};

use super::params::{LassoParams, RidgeParams};
use super::LearnerError;
use crate::matrix::{cholesky_solve, mean, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    (0..x.cols()).map(|c| mean(&x.col_values(c))).collect()
}

/// Solves `(Xc' Xc + alpha I) w = Xc' yc` on centred data (uncentred when
/// `fit_intercept` is false); the intercept is not penalised.
pub fn ridge_solve(x: &Matrix, y: &[f64], alpha: f64, fit_intercept: bool) -> Result<LinearModel, LearnerError> {
    let (n, d) = (x.rows(), x.cols());
    let (x_mean, y_mean) = if fit_intercept {
        (column_means(x), mean(y))
    } else {
        (vec![0.0; d], 0.0)
    };
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut centred = vec![0.0; d];
    for i in 0..n {
        for (c, (v, m)) in centred.iter_mut().zip(x.row(i).iter().zip(&x_mean)) {
            *c = v - m;
        }
        let yc = y[i] - y_mean;
        for a in 0..d {
            rhs[a] += centred[a] * yc;
            for b in 0..=a {
                gram[a * d + b] += centred[a] * centred[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[b * d + a] = gram[a * d + b];
        }
        gram[a * d + a] += alpha;
    }
    let coef = if d == 0 {
        Vec::new()
    } else {
        cholesky_solve(&gram, d, &rhs).map_err(|e| LearnerError::Singular(e.to_string()))?
    };
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel { coef, intercept })
}

pub fn fit_ridge(params: &RidgeParams, x: &Matrix, y: &[f64]) -> Result<LinearModel, LearnerError> {
    ridge_solve(x, y, params.alpha, params.fit_intercept)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Cyclic coordinate descent for
/// `1/(2n) |y - Xw - b|^2 + l1 |w|_1 + l2/2 |w|^2`.
/// Stops when the largest coefficient change in a sweep falls below `tol`.
pub fn elastic_net(
    x: &Matrix,
    y: &[f64],
    l1: f64,
    l2: f64,
    fit_intercept: bool,
    tol: f64,
    max_iter: usize,
) -> Result<LinearModel, LearnerError> {
    let (n, d) = (x.rows(), x.cols());
    let nf = n as f64;
    let (x_mean, y_mean) = if fit_intercept {
        (column_means(x), mean(y))
    } else {
        (vec![0.0; d], 0.0)
    };
    // Column-major centred copy.
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|c| (0..n).map(|r| x.get(r, c) - x_mean[c]).collect())
        .collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut w = vec![0.0; d];
    let mut converged = d == 0;
    for _ in 0..max_iter {
        if converged {
            break;
        }
        let mut max_delta = 0.0f64;
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let rho: f64 = cols[j].iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() + sq[j] * w[j];
            let next = soft_threshold(rho, nf * l1) / (sq[j] + nf * l2);
            let delta = next - w[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(&cols[j]) {
                    *r -= delta * a;
                }
                w[j] = next;
            }
            max_delta = max_delta.max(delta.abs());
        }
        converged = max_delta < tol;
    }
    if !converged {
        return Err(LearnerError::NonConvergence { iterations: max_iter });
    }
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(a, m)| a * m).sum::<f64>();
    Ok(LinearModel { coef: w, intercept })
}

pub fn fit_lasso(params: &LassoParams, x: &Matrix, y: &[f64]) -> Result<LinearModel, LearnerError> {
    elastic_net(x, y, params.alpha, 0.0, params.fit_intercept, params.tol, params.max_iter)
}
