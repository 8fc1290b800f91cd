//! AdaBoost.R2 with shallow CART base learners.
//!
//! Each round fits a tree on a weighted bootstrap resample, scores every
//! training row by its normalised error, and re-weights the rows:
//!
//! ```text
//! L_i   = loss(|e_i| / max|e|)            (linear, square or exponential)
//! Lbar  = sum_i w_i L_i
//! beta  = Lbar / (1 - Lbar)
//! w_i  <- w_i * beta^(lr * (1 - L_i)),  then renormalised
//! ```
//!
//! The round's vote weight is `lr * ln(1 / beta)`; predictions are the
//! weighted median of the round predictions. A round with `Lbar >= 0.5`
//! ends training (it is discarded unless it is the only one), and a
//! perfect round ends training with vote weight 1.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::params::{AdaLoss, AdaParams};
use super::tree::{grow, Criterion, GrowConfig, Tree};
use crate::matrix::Matrix;
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaRound {
    /// Weighted average loss of the round.
    pub error: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub trees: Vec<Tree>,
    pub weights: Vec<f64>,
    /// One entry per kept round.
    pub rounds: Vec<AdaRound>,
}

impl AdaBoostModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict_row(row)).collect();
        weighted_median(&preds, &self.weights)
    }
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= 0.5 * total {
            return values[i];
        }
    }
    values[*order.last().expect("at least one round")]
}

/// Per-row losses normalised by the largest absolute error; `None` when every error is 0.
pub fn normalised_losses(errors: &[f64], loss: AdaLoss) -> Option<Vec<f64>> {
    let max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if max == 0.0 {
        return None;
    }
    Some(
        errors
            .iter()
            .map(|e| {
                let r = e.abs() / max;
                match loss {
                    AdaLoss::Linear => r,
                    AdaLoss::Square => r * r,
                    AdaLoss::Exponential => 1.0 - (-r).exp(),
                }
            })
            .collect(),
    )
}

/// Applies the weight recurrence for one round; returns `(Lbar, beta)`.
pub fn reweight(weights: &mut [f64], losses: &[f64], learning_rate: f64) -> (f64, f64) {
    let error: f64 = weights.iter().zip(losses).map(|(w, l)| w * l).sum();
    let beta = error / (1.0 - error);
    for (w, l) in weights.iter_mut().zip(losses) {
        *w *= beta.powf(learning_rate * (1.0 - l));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (error, beta)
}

pub fn fit(params: &AdaParams, x: &Matrix, y: &[f64], seed: u64) -> AdaBoostModel {
    let n = x.rows();
    let cfg = GrowConfig {
        max_depth: Some(params.max_depth),
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_features: None,
        features: None,
    };
    let mut sample_weights = vec![1.0 / n as f64; n];
    let mut model = AdaBoostModel {
        trees: Vec::new(),
        weights: Vec::new(),
        rounds: Vec::new(),
    };
    for round in 0..params.n_estimators {
        let mut rng = rng_for(seed, Stream::AdaRound, round as u64);
        let sampler = WeightedIndex::new(&sample_weights).expect("weights stay positive");
        let rows: Vec<usize> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let tree = grow(x, y, rows, &cfg, Criterion::Variance, &mut rng);
        let errors: Vec<f64> = (0..n).map(|i| tree.predict_row(x.row(i)) - y[i]).collect();
        let Some(losses) = normalised_losses(&errors, params.loss) else {
            model.trees.push(tree);
            model.weights.push(1.0);
            model.rounds.push(AdaRound {
                error: 0.0,
                beta: 0.0,
            });
            break;
        };
        let error: f64 = sample_weights.iter().zip(&losses).map(|(w, l)| w * l).sum();
        if error >= 0.5 {
            if model.trees.is_empty() {
                model.trees.push(tree);
                model.weights.push(1.0);
                model.rounds.push(AdaRound {
                    error,
                    beta: error / (1.0 - error),
                });
            }
            break;
        }
        if error <= 0.0 {
            model.trees.push(tree);
            model.weights.push(1.0);
            model.rounds.push(AdaRound { error, beta: 0.0 });
            break;
        }
        let mut next = sample_weights.clone();
        let (error, beta) = reweight(&mut next, &losses, params.learning_rate);
        model.trees.push(tree);
        model.weights.push(params.learning_rate * (1.0 / beta).ln());
        model.rounds.push(AdaRound { error, beta });
        sample_weights = next;
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_one_and_of_many() {
        assert_eq!(weighted_median(&[3.0], &[0.2]), 3.0);
        assert_eq!(weighted_median(&[1.0, 5.0, 3.0], &[1.0, 1.0, 1.0]), 3.0);
        assert_eq!(weighted_median(&[1.0, 5.0, 3.0], &[0.1, 0.8, 0.1]), 5.0);
    }

    #[test]
    fn square_losses_and_reweighting() {
        let losses = normalised_losses(&[1.0, -2.0, 0.0], AdaLoss::Square).unwrap();
        assert_eq!(losses, vec![0.25, 1.0, 0.0]);
        let mut w = vec![0.5, 0.25, 0.25];
        let (err, beta) = reweight(&mut w, &[0.25, 0.0, 0.0], 1.0);
        assert!((err - 0.125).abs() < 1e-15);
        assert!((beta - 1.0 / 7.0).abs() < 1e-15);
        // unnormalised: 0.5 * beta^0.75, 0.25 * beta, 0.25 * beta
        let raw = [0.5 * beta.powf(0.75), 0.25 * beta, 0.25 * beta];
        let total: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / total).abs() < 1e-15);
        }
        assert!(normalised_losses(&[0.0, 0.0], AdaLoss::Linear).is_none());
    }

    #[test]
    fn perfect_first_round_stops() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let m = fit(&AdaParams::default(), &x, &[2.0, 2.0], 1);
        assert_eq!(m.trees.len(), 1);
        assert_eq!(m.predict_row(&[0.0]), 2.0);
    }
}
