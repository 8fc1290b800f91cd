//! Gradient boosting on squared loss, first-order (classic) and
//! second-order with L1/L2-regularised leaf weights.
//!
//! Both variants start from `F0 = mean(y)` and add `learning_rate * tree(x)`
//! per stage. With `reg_lambda = reg_alpha = 0`, unit hessians and full
//! column sampling the second-order variant chooses the same splits and leaf
//! values as the first-order one.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::params::{GbParams, RbParams};
use super::tree::{grow, Criterion, GrowConfig, Tree};
use crate::matrix::{mean, Matrix};
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training MSE before the first stage and after each stage.
    pub train_mse: Vec<f64>,
}

impl BoostedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |f, t| f + self.learning_rate * t.predict_row(row))
    }
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

struct StageSetup {
    n_estimators: usize,
    learning_rate: f64,
    subsample: f64,
    colsample: f64,
    grow: GrowConfig,
    criterion: Criterion,
}

fn boost(setup: StageSetup, x: &Matrix, y: &[f64], seed: u64) -> BoostedModel {
    let n = x.rows();
    let d = x.cols();
    let base_score = mean(y);
    let mut f = vec![base_score; n];
    let mut trees = Vec::with_capacity(setup.n_estimators);
    let mut train_mse = vec![mse(y, &f)];
    let n_rows = ((setup.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((setup.colsample * d as f64).round() as usize).clamp(1, d);
    let second_order = matches!(setup.criterion, Criterion::SecondOrder { .. });
    for stage in 0..setup.n_estimators {
        let mut rng = rng_for(seed, Stream::BoostStage, stage as u64);
        let rows: Vec<usize> = if n_rows < n {
            let mut r = index::sample(&mut rng, n, n_rows).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let mut cfg = setup.grow.clone();
        if n_cols < d {
            let mut cols = index::sample(&mut rng, d, n_cols).into_vec();
            cols.sort_unstable();
            cfg.features = Some(cols);
        }
        // First order fits residuals y - F; second order fits gradients F - y.
        let targets: Vec<f64> = if second_order {
            f.iter().zip(y).map(|(fi, yi)| fi - yi).collect()
        } else {
            y.iter().zip(&f).map(|(yi, fi)| yi - fi).collect()
        };
        let tree = grow(x, &targets, rows, &cfg, setup.criterion, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += setup.learning_rate * tree.predict_row(x.row(i));
        }
        train_mse.push(mse(y, &f));
        trees.push(tree);
    }
    BoostedModel {
        base_score,
        learning_rate: setup.learning_rate,
        trees,
        train_mse,
    }
}

pub fn fit_gradient_boosting(params: &GbParams, x: &Matrix, y: &[f64], seed: u64) -> BoostedModel {
    boost(
        StageSetup {
            n_estimators: params.n_estimators,
            learning_rate: params.learning_rate,
            subsample: params.subsample,
            colsample: 1.0,
            grow: GrowConfig {
                max_depth: params.max_depth,
                min_samples_split: params.min_samples_split,
                min_samples_leaf: params.min_samples_leaf,
                max_features: None,
                features: None,
            },
            criterion: Criterion::Variance,
        },
        x,
        y,
        seed,
    )
}

pub fn fit_regularized_boosting(params: &RbParams, x: &Matrix, y: &[f64], seed: u64) -> BoostedModel {
    boost(
        StageSetup {
            n_estimators: params.n_estimators,
            learning_rate: params.learning_rate,
            subsample: params.subsample,
            colsample: params.colsample_bytree,
            grow: GrowConfig {
                max_depth: params.max_depth,
                min_samples_split: params.min_samples_split,
                min_samples_leaf: params.min_samples_leaf,
                max_features: None,
                features: None,
            },
            criterion: Criterion::SecondOrder {
                lambda: params.reg_lambda,
                alpha: params.reg_alpha,
            },
        },
        x,
        y,
        seed,
    )
}
