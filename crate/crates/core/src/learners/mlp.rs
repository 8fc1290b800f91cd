//! Single-hidden-layer perceptron regressor.
//!
//! Loss: `1/2 * mean((f(x) - y)^2) + alpha / (2n) * (|W1|^2 + |w2|^2)`.
//! Parameters are handled as one flat vector `[W1 (d x h, row-major), b1, w2, b2]`
//! so the optimisers and the gradient check share a single layout.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Activation, MlpParams, Solver};
use super::LearnerError;
use crate::matrix::Matrix;
use crate::rng::{rng_for, Stream};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const LBFGS_HISTORY: usize = 10;

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `a = apply(z)`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Shape of the network; owns no weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl MlpShape {
    pub fn param_count(&self) -> usize {
        self.inputs * self.hidden + 2 * self.hidden + 1
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.inputs * self.hidden;
        (w1, w1 + self.hidden, w1 + 2 * self.hidden)
    }

    fn forward(&self, theta: &[f64], row: &[f64], hidden: &mut [f64]) -> f64 {
        let (b1_at, w2_at, b2_at) = self.offsets();
        let h = self.hidden;
        let mut out = theta[b2_at];
        for k in 0..h {
            let mut z = theta[b1_at + k];
            for (j, xj) in row.iter().enumerate() {
                z += xj * theta[j * h + k];
            }
            let a = self.activation.apply(z);
            hidden[k] = a;
            out += a * theta[w2_at + k];
        }
        out
    }

    pub fn predict_row(&self, theta: &[f64], row: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        self.forward(theta, row, &mut hidden)
    }

    /// Penalised loss only.
    pub fn loss(&self, theta: &[f64], x: &Matrix, y: &[f64], alpha: f64) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let n = y.len() as f64;
        let sse: f64 = x
            .iter_rows()
            .zip(y)
            .map(|(r, t)| {
                let e = self.forward(theta, r, &mut hidden) - t;
                e * e
            })
            .sum();
        0.5 * sse / n + alpha / (2.0 * n) * self.penalty(theta)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let (b1_at, w2_at, b2_at) = self.offsets();
        theta[..b1_at].iter().map(|w| w * w).sum::<f64>()
            + theta[w2_at..b2_at].iter().map(|w| w * w).sum::<f64>()
    }

    /// Penalised loss and its analytic gradient.
    pub fn loss_grad(&self, theta: &[f64], x: &Matrix, y: &[f64], alpha: f64) -> (f64, Vec<f64>) {
        let (b1_at, w2_at, b2_at) = self.offsets();
        let h = self.hidden;
        let n = y.len() as f64;
        let mut grad = vec![0.0; theta.len()];
        let mut hidden = vec![0.0; h];
        let mut sse = 0.0;
        for (row, t) in x.iter_rows().zip(y) {
            let r = self.forward(theta, row, &mut hidden) - t;
            sse += r * r;
            grad[b2_at] += r;
            for k in 0..h {
                grad[w2_at + k] += r * hidden[k];
                let delta = r * theta[w2_at + k] * self.activation.derivative(hidden[k]);
                grad[b1_at + k] += delta;
                for (j, xj) in row.iter().enumerate() {
                    grad[j * h + k] += delta * xj;
                }
            }
        }
        for g in grad.iter_mut() {
            *g /= n;
        }
        let scale = alpha / n;
        for i in (0..b1_at).chain(w2_at..b2_at) {
            grad[i] += scale * theta[i];
        }
        let loss = 0.5 * sse / n + alpha / (2.0 * n) * self.penalty(theta);
        (loss, grad)
    }

    /// Glorot-uniform initialisation of weights and biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_for(seed, Stream::MlpInit, 0);
        let factor = if self.activation == Activation::Logistic {
            2.0
        } else {
            6.0
        };
        let mut theta = Vec::with_capacity(self.param_count());
        let bound1 = (factor / (self.inputs + self.hidden) as f64).sqrt();
        for _ in 0..self.inputs * self.hidden + self.hidden {
            theta.push(rng.random_range(-bound1..bound1));
        }
        let bound2 = (factor / (self.hidden + 1) as f64).sqrt();
        for _ in 0..self.hidden + 1 {
            theta.push(rng.random_range(-bound2..bound2));
        }
        theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub activation: Activation,
    /// Input-to-hidden weights, `inputs x hidden`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// Training loss at initialisation followed by one entry per iteration.
    pub loss_curve: Vec<f64>,
    pub iterations: usize,
}

impl MlpModel {
    pub fn shape(&self) -> MlpShape {
        MlpShape {
            inputs: self.w1.rows(),
            hidden: self.w1.cols(),
            activation: self.activation,
        }
    }

    pub fn from_flat(shape: MlpShape, theta: &[f64], loss_curve: Vec<f64>, iterations: usize) -> Self {
        let (b1_at, w2_at, b2_at) = shape.offsets();
        Self {
            activation: shape.activation,
            w1: Matrix::from_vec(shape.inputs, shape.hidden, theta[..b1_at].to_vec())
                .expect("flat parameter layout"),
            b1: theta[b1_at..w2_at].to_vec(),
            w2: theta[w2_at..b2_at].to_vec(),
            b2: theta[b2_at],
            loss_curve,
            iterations,
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut theta = self.w1.as_slice().to_vec();
        theta.extend_from_slice(&self.b1);
        theta.extend_from_slice(&self.w2);
        theta.push(self.b2);
        theta
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let h = self.w1.cols();
        let mut out = self.b2;
        for k in 0..h {
            let mut z = self.b1[k];
            for (j, xj) in row.iter().enumerate() {
                z += xj * self.w1.get(j, k);
            }
            out += self.activation.apply(z) * self.w2[k];
        }
        out
    }
}

fn check_loss(loss: f64, iteration: usize) -> Result<f64, LearnerError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(LearnerError::NonFiniteLoss { iteration })
    }
}

struct Progress {
    best: f64,
    stall: usize,
}

impl Progress {
    fn new() -> Self {
        Self {
            best: f64::INFINITY,
            stall: 0,
        }
    }

    /// Records `value`; returns whether it improved on the best by more than `tol`.
    fn update(&mut self, value: f64, tol: f64) -> bool {
        if value < self.best - tol {
            self.best = value;
            self.stall = 0;
            true
        } else {
            self.best = self.best.min(value);
            self.stall += 1;
            false
        }
    }
}

/// Adam with a constant step. With early stopping the best parameters by
/// validation MSE are restored at the end.
fn train_adam(
    shape: &MlpShape,
    mut theta: Vec<f64>,
    p: &MlpParams,
    x: &Matrix,
    y: &[f64],
    val: Option<(&Matrix, &[f64])>,
) -> Result<(Vec<f64>, Vec<f64>, usize), LearnerError> {
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut curve = vec![check_loss(shape.loss(&theta, x, y, p.alpha), 0)?];
    let mut progress = Progress::new();
    let mut best_theta = theta.clone();
    let mut iterations = 0;
    for it in 1..=p.max_iter {
        let (_, grad) = shape.loss_grad(&theta, x, y, p.alpha);
        let c1 = 1.0 - ADAM_BETA1.powi(it as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(it as i32);
        let step = p.learning_rate_init * c2.sqrt() / c1;
        for i in 0..theta.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            theta[i] -= step * m[i] / (v[i].sqrt() + ADAM_EPS);
        }
        let loss = check_loss(shape.loss(&theta, x, y, p.alpha), it)?;
        curve.push(loss);
        iterations = it;
        let monitored = match val {
            Some((vx, vy)) => check_loss(shape.loss(&theta, vx, vy, 0.0) * 2.0, it)?,
            None => loss,
        };
        if progress.update(monitored, p.tol) {
            best_theta.clone_from(&theta);
        }
        if progress.stall >= p.n_iter_no_change {
            break;
        }
    }
    let out = if val.is_some() { best_theta } else { theta };
    Ok((out, curve, iterations))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking.
fn train_lbfgs(
    shape: &MlpShape,
    mut theta: Vec<f64>,
    p: &MlpParams,
    x: &Matrix,
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, usize), LearnerError> {
    let (mut loss, mut grad) = shape.loss_grad(&theta, x, y, p.alpha);
    let mut curve = vec![check_loss(loss, 0)?];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut progress = Progress::new();
    let mut iterations = 0;
    for it in 1..=p.max_iter {
        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, yv) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(yv, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(yv) {
                *qi -= a * yi;
            }
            alphas.push((rho, a));
        }
        if let (Some(s), Some(yv)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, yv) / dot(yv, yv);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, yv), (rho, a)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(yv, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
            s_hist.clear();
            y_hist.clear();
        }
        if slope.abs() < 1e-20 {
            break;
        }
        let mut step = 1.0;
        let (mut next, mut next_loss, mut next_grad);
        loop {
            next = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect::<Vec<_>>();
            (next_loss, next_grad) = shape.loss_grad(&next, x, y, p.alpha);
            if next_loss.is_finite() && next_loss <= loss + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
        let next_loss = check_loss(next_loss, it)?;
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-12 {
            s_hist.push(s);
            y_hist.push(yv);
            if s_hist.len() > LBFGS_HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        theta = next;
        loss = next_loss;
        grad = next_grad;
        curve.push(loss);
        iterations = it;
        progress.update(loss, p.tol);
        if progress.stall >= p.n_iter_no_change || step < 1e-12 {
            break;
        }
    }
    Ok((theta, curve, iterations))
}

pub fn fit(p: &MlpParams, x: &Matrix, y: &[f64], seed: u64) -> Result<MlpModel, LearnerError> {
    let hidden = match p.hidden_layer_sizes.as_slice() {
        [h] if *h >= 1 => *h,
        _ => {
            return Err(LearnerError::InvalidParam {
                name: "hidden_layer_sizes".into(),
                message: "exactly one hidden layer of at least one unit".into(),
            })
        }
    };
    let shape = MlpShape {
        inputs: x.cols(),
        hidden,
        activation: p.activation,
    };
    let theta = shape.init(seed);
    let (theta, curve, iterations) = match p.solver {
        Solver::Lbfgs => train_lbfgs(&shape, theta, p, x, y)?,
        Solver::Adam if p.early_stopping && y.len() >= 2 => {
            let n = y.len();
            let n_val = ((p.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_for(seed, Stream::MlpValidation, 0));
            let (val_idx, train_idx) = order.split_at(n_val);
            let mut val_idx = val_idx.to_vec();
            let mut train_idx = train_idx.to_vec();
            val_idx.sort_unstable();
            train_idx.sort_unstable();
            let tx = x.select_rows(&train_idx);
            let ty: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
            let vx = x.select_rows(&val_idx);
            let vy: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();
            train_adam(&shape, theta, p, &tx, &ty, Some((&vx, &vy)))?
        }
        Solver::Adam => train_adam(&shape, theta, p, x, y, None)?,
    };
    Ok(MlpModel::from_flat(shape, &theta, curve, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> MlpShape {
        MlpShape {
            inputs: 3,
            hidden: 4,
            activation: Activation::Logistic,
        }
    }

    #[test]
    fn zero_weights_output_bias() {
        let s = shape();
        let mut theta = vec![0.0; s.param_count()];
        *theta.last_mut().unwrap() = 1.7;
        let m = MlpModel::from_flat(s, &theta, vec![], 0);
        assert_eq!(m.predict_row(&[3.0, -1.0, 9.0]), 1.7);
        assert_eq!(m.predict_row(&[0.0, 0.0, 0.0]), 1.7);
    }

    #[test]
    fn flat_layout_round_trips() {
        let s = shape();
        let theta = s.init(5);
        let m = MlpModel::from_flat(s, &theta, vec![], 0);
        assert_eq!(m.flat(), theta);
        assert_eq!(m.predict_row(&[0.1, 0.2, 0.3]), s.predict_row(&theta, &[0.1, 0.2, 0.3]));
    }

    #[test]
    fn loss_grad_matches_loss() {
        let s = shape();
        let theta = s.init(1);
        let x = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, -1.0, 0.5]]).unwrap();
        let y = [1.0, 2.0];
        assert_eq!(s.loss_grad(&theta, &x, &y, 0.3).0, s.loss(&theta, &x, &y, 0.3));
    }

    #[test]
    fn rejects_two_hidden_layers() {
        let p = MlpParams {
            hidden_layer_sizes: vec![4, 4],
            ..MlpParams::default()
        };
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(fit(&p, &x, &[0.0, 1.0], 0).is_err());
    }

    #[test]
    fn both_solvers_reduce_loss() {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| [f64::from(i % 7) / 3.0 - 1.0, f64::from(i % 5) / 2.0 - 1.0])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[0] + 0.5 * r[1]).collect();
        for solver in [Solver::Adam, Solver::Lbfgs] {
            let p = MlpParams {
                solver,
                early_stopping: false,
                max_iter: 300,
                ..MlpParams::default()
            };
            let m = fit(&p, &x, &y, 3).unwrap();
            assert!(m.loss_curve.last().unwrap() < &m.loss_curve[0], "{solver:?}");
        }
    }
}
