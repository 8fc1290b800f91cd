use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnit {
    /// Errors in ln(participants).
    LogSpace,
    /// Errors in participants.
    RawSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
    pub unit: MetricUnit,
}

/// R², MAE and RMSE. With zero-variance truth, R² is 1 for a perfect fit
/// and 0 otherwise.
pub fn compute_metrics(y_true: &[f64], y_pred: &[f64], unit: MetricUnit) -> Result<MetricSet, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let (mut sse, mut sst, mut abs) = (0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = t - p;
        sse += e * e;
        abs += e.abs();
        sst += (t - mean) * (t - mean);
    }
    let r2 = if sst == 0.0 {
        if sse == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - sse / sst
    };
    Ok(MetricSet {
        r2,
        mae: abs / n,
        rmse: (sse / n).sqrt(),
        unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], MetricUnit::LogSpace).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(m.r2, 0.0);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&[1.0, 5.0], &[1.0, 5.0], MetricUnit::RawSpace).unwrap();
        assert_eq!((m.r2, m.mae, m.rmse), (1.0, 0.0, 0.0));
        let c = compute_metrics(&[3.0, 3.0], &[3.0, 3.0], MetricUnit::RawSpace).unwrap();
        assert_eq!(c.r2, 1.0);
        let c = compute_metrics(&[3.0, 3.0], &[3.0, 4.0], MetricUnit::RawSpace).unwrap();
        assert_eq!(c.r2, 0.0);
    }

    #[test]
    fn errors() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0], MetricUnit::LogSpace).is_err());
        assert!(compute_metrics(&[], &[], MetricUnit::LogSpace).is_err());
    }
}
