//! Split-conformal intervals on the log scale.
//!
//! Scores are absolute log residuals on a calibration set the model never
//! trained on. For miscoverage `alpha` the half-width is the
//! `ceil((n + 1)(1 - alpha))`-th smallest score, or unbounded when that rank
//! exceeds `n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("calibration set is empty")]
    Empty,
    #[error("calibration inputs differ in length ({truth} targets, {pred} predictions)")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("non-finite calibration residual")]
    NonFinite,
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
}

/// Where the calibration residuals came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationProtocol {
    /// The held-out test partition.
    TestSplit,
    /// A separate slice of the training partition, excluded from fitting.
    Dedicated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    /// Ascending.
    pub scores: Vec<f64>,
    pub protocol: CalibrationProtocol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogInterval {
    pub lower: f64,
    /// `f64::INFINITY` when unbounded.
    pub upper: f64,
}

/// Participant-count interval; `upper` is `None` when unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountInterval {
    pub lower: u64,
    pub upper: Option<u64>,
}

impl CountInterval {
    pub fn contains(&self, n: f64) -> bool {
        n >= self.lower as f64 && self.upper.is_none_or(|u| n <= u as f64)
    }
}

pub fn calibrate(
    y_log: &[f64],
    pred_log: &[f64],
    protocol: CalibrationProtocol,
) -> Result<ConformalCalibration, ConformalError> {
    if y_log.len() != pred_log.len() {
        return Err(ConformalError::LengthMismatch {
            truth: y_log.len(),
            pred: pred_log.len(),
        });
    }
    if y_log.is_empty() {
        return Err(ConformalError::Empty);
    }
    let mut scores: Vec<f64> = y_log.iter().zip(pred_log).map(|(y, p)| (y - p).abs()).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ConformalError::NonFinite);
    }
    scores.sort_by(f64::total_cmp);
    Ok(ConformalCalibration { scores, protocol })
}

/// Rounds to the nearest integer when within `1e-9` (relative) of it.
pub fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        v
    }
}

/// 1-based rank of the conformal quantile.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    // The small offset keeps exact products such as 10 * 0.9 from rounding up.
    ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize
}

impl ConformalCalibration {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64, ConformalError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConformalError::InvalidAlpha(alpha));
        }
        let rank = quantile_rank(self.len(), alpha);
        Ok(if rank > self.len() {
            f64::INFINITY
        } else {
            self.scores[rank - 1]
        })
    }

    pub fn log_interval(&self, pred_log: f64, alpha: f64) -> Result<LogInterval, ConformalError> {
        let q = self.quantile(alpha)?;
        Ok(LogInterval {
            lower: pred_log - q,
            upper: pred_log + q,
        })
    }

    /// Back-transformed interval, rounded outward, lower end at least 1.
    /// Values within `1e-9` (relative) of an integer snap to it, so
    /// `exp(ln 20)` rounds to 20 from both sides.
    pub fn predict_interval(&self, pred_log: f64, alpha: f64) -> Result<CountInterval, ConformalError> {
        let iv = self.log_interval(pred_log, alpha)?;
        let lower = snap(iv.lower.exp()).floor().max(1.0) as u64;
        let upper = iv.upper.is_finite().then(|| snap(iv.upper.exp()).ceil() as u64);
        Ok(CountInterval { lower, upper })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(scores: &[f64]) -> ConformalCalibration {
        calibrate(scores, &vec![0.0; scores.len()], CalibrationProtocol::TestSplit).unwrap()
    }

    #[test]
    fn scores_sorted() {
        assert_eq!(cal(&[3.0, -1.0, 4.0, 2.0]).scores, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_scores_collapse_to_point() {
        let c = cal(&[0.0; 4]);
        let iv = c.predict_interval(20.0f64.ln(), 0.3).unwrap();
        assert_eq!(iv, CountInterval { lower: 20, upper: Some(20) });
    }

    #[test]
    fn rank_arithmetic() {
        assert_eq!(quantile_rank(9, 0.1), 9);
        let c = cal(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(c.quantile(0.1).unwrap(), 0.9);
        assert_eq!(quantile_rank(3, 0.1), 4);
        let small = cal(&[0.1, 0.2, 0.3]);
        assert_eq!(small.quantile(0.1).unwrap(), f64::INFINITY);
        let iv = small.predict_interval(3.0, 0.1).unwrap();
        assert_eq!(iv.upper, None);
        assert_eq!(iv.lower, 1);
    }

    #[test]
    fn rejects_bad_alpha_and_empty() {
        let c = cal(&[0.1]);
        assert!(c.quantile(0.0).is_err());
        assert!(c.quantile(1.0).is_err());
        assert!(c.quantile(f64::NAN).is_err());
        assert_eq!(calibrate(&[], &[], CalibrationProtocol::Dedicated), Err(ConformalError::Empty));
    }

    #[test]
    fn interval_contains_point_and_is_asymmetric() {
        let c = cal(&[0.5; 10]);
        let p = 30.0f64.ln();
        let iv = c.log_interval(p, 0.2).unwrap();
        let (lo, hi) = (iv.lower.exp(), iv.upper.exp());
        assert!(30.0 - lo < hi - 30.0);
        assert!(c.predict_interval(p, 0.2).unwrap().contains(30.0));
    }
}
