//! Epsilon-insensitive support vector regression.
//!
//! The dual is written over `2n` variables `b = [a; a*]` with signs
//! `z = [+1; -1]`:
//!
//! ```text
//! min  1/2 b' Q b + p' b    s.t.  z' b = 0,  0 <= b <= C
//! Q_ij = z_i z_j K(x_i mod n, x_j mod n),   p = [eps - y; eps + y]
//! ```
//!
//! and solved by sequential minimal optimisation with second-order working
//! set selection. The bias comes from the KKT conditions (average over free
//! variables, or the midpoint of the feasible interval when none is free).
//! Prediction is `sum_i (a_i - a*_i) K(x_i, x) + b`.

use serde::{Deserialize, Serialize};

use super::params::{Gamma, GammaRule, KernelKind, SvrParams};
use super::LearnerError;
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
    Poly { gamma: f64, degree: u32, coef0: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Poly {
                gamma,
                degree,
                coef0,
            } => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (gamma * dot + coef0).powi(degree as i32)
            }
        }
    }
}

/// `1 / (d * Var(X))` with the population variance of every entry; 1 for a
/// constant matrix.
pub fn scale_gamma(x: &Matrix) -> f64 {
    let values = x.as_slice();
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub support_vectors: Matrix,
    /// `a_i - a*_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub intercept: f64,
    /// Dual objective at the solution.
    pub objective: f64,
    pub iterations: usize,
}

impl SvrModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, row))
            .sum::<f64>()
            + self.intercept
    }
}

/// Full solution of the dual, before support vectors are extracted.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// The `2n` dual variables `[a; a*]`.
    pub beta: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
}

fn resolve_kernel(params: &SvrParams, x: &Matrix) -> Kernel {
    let gamma = match params.gamma {
        Gamma::Named(GammaRule::Scale) => scale_gamma(x),
        Gamma::Value(g) => g,
    };
    match params.kernel {
        KernelKind::Rbf => Kernel::Rbf { gamma },
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Poly => Kernel::Poly {
            gamma,
            degree: params.degree,
            coef0: params.coef0,
        },
    }
}

pub fn gram(kernel: &Kernel, x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(x.row(i), x.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// SMO on the epsilon-SVR dual for a precomputed `n x n` kernel matrix.
pub fn solve_dual(
    k: &[f64],
    y: &[f64],
    c: f64,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution, LearnerError> {
    let n = y.len();
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kern = |a: usize, b: usize| k[(a % n) * n + (b % n)];
    let q = |a: usize, b: usize| sign(a) * sign(b) * kern(a, b);
    let p: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();
    let qd: Vec<f64> = (0..l).map(|t| kern(t, t)).collect();
    let mut alpha = vec![0.0; l];
    let mut grad = p.clone();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    loop {
        // Working set selection (maximal violating pair, second-order choice of j).
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = None;
        for t in 0..l {
            if sign(t) > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    gmax_idx = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                gmax_idx = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gmin_idx = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = gmax_idx {
            for j in 0..l {
                if sign(j) > 0.0 {
                    if !lower(alpha[j]) {
                        let diff = gmax + grad[j];
                        gmax2 = gmax2.max(grad[j]);
                        if diff > 0.0 {
                            let quad = qd[i] + qd[j] - 2.0 * sign(i) * q(i, j);
                            let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= obj_min {
                                gmin_idx = Some(j);
                                obj_min = obj;
                            }
                        }
                    }
                } else if !upper(alpha[j]) {
                    let diff = gmax - grad[j];
                    gmax2 = gmax2.max(-grad[j]);
                    if diff > 0.0 {
                        let quad = qd[i] + qd[j] + 2.0 * sign(i) * q(i, j);
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            gmin_idx = Some(j);
                            obj_min = obj;
                        }
                    }
                }
            }
        }
        let (i, j) = match (gmax_idx, gmin_idx) {
            (Some(i), Some(j)) if gmax + gmax2 >= tol => (i, j),
            _ => break,
        };
        if iter >= max_iter {
            return Err(LearnerError::NonConvergence { iterations: iter });
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if sign(i) != sign(j) {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias from the KKT conditions.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * grad[t];
        if upper(alpha[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_count += 1;
            free_sum += yg;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (ub + lb) / 2.0
    };
    // f = 1/2 b'Qb + p'b = 1/2 sum_t b_t (grad_t + p_t)
    let objective = 0.5 * (0..l).map(|t| alpha[t] * (grad[t] + p[t])).sum::<f64>();
    Ok(DualSolution {
        beta: alpha,
        rho,
        objective,
        iterations: iter,
    })
}

pub fn fit(params: &SvrParams, x: &Matrix, y: &[f64]) -> Result<SvrModel, LearnerError> {
    let n = x.rows();
    let kernel = resolve_kernel(params, x);
    let k = gram(&kernel, x);
    let sol = solve_dual(&k, y, params.c, params.epsilon, params.tol, params.max_iter)?;
    let mut sv_rows = Vec::new();
    let mut dual_coef = Vec::new();
    for i in 0..n {
        let coef = sol.beta[i] - sol.beta[i + n];
        if coef != 0.0 {
            sv_rows.push(i);
            dual_coef.push(coef);
        }
    }
    Ok(SvrModel {
        kernel,
        support_vectors: x.select_rows(&sv_rows),
        dual_coef,
        intercept: -sol.rho,
        objective: sol.objective,
        iterations: sol.iterations,
    })
}
