//! Random forest regression: bootstrap-aggregated CART trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::ForestParams;
use super::tree::{grow, Criterion, GrowConfig, Tree};
use crate::matrix::Matrix;
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }
}

/// Tree `t` draws from its own stream, so the forest is identical however
/// the trees are scheduled across threads.
pub fn fit(params: &ForestParams, x: &Matrix, y: &[f64], seed: u64) -> ForestModel {
    let n = x.rows();
    let cfg = GrowConfig {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features.count(x.cols()),
        features: None,
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, Stream::ForestTree, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, rows, &cfg, Criterion::Variance, &mut rng)
        })
        .collect();
    ForestModel { trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::params::{MaxFeatures, TreeParams};
    use crate::learners::tree::fit_decision_tree;

    fn data() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|i| {
                let i = f64::from(i);
                [i % 7.0, (i * 3.0) % 11.0, i / 4.0]
            })
            .collect();
        let y = rows.iter().map(|r| r[0] * 2.0 - r[1] + r[2].sin()).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_is_a_tree() {
        let (x, y) = data();
        let p = ForestParams {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..ForestParams::default()
        };
        let forest = fit(&p, &x, &y, 11);
        let tree = fit_decision_tree(
            &TreeParams {
                max_features: MaxFeatures::All,
                ..TreeParams::default()
            },
            &x,
            &y,
            99,
        );
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn constant_target() {
        let (x, _) = data();
        let forest = fit(&ForestParams::default(), &x, &[1.5; 40], 3);
        assert!(x.iter_rows().all(|r| forest.predict_row(r) == 1.5));
    }
}
