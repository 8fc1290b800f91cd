//! Descriptive statistics of a corpus.

use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, Metric};

/// Quantile of ascending `sorted` values by linear interpolation between
/// closest ranks (position `p * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Standardised third central moment; 0 for a constant column.
    pub skewness: f64,
    /// Excess kurtosis (standardised fourth central moment minus 3); 0 for a constant column.
    pub kurtosis: f64,
}

impl ColumnStats {
    pub fn of(values: &[f64]) -> Result<ColumnStats, DataError> {
        let n = values.len();
        if n < 2 {
            return Err(DataError::TooFewRecords { needed: 2, found: n });
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let std = (m2 / (nf - 1.0)).sqrt();
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        let (skewness, kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(ColumnStats {
            mean,
            std,
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[n - 1],
            skewness,
            kurtosis,
        })
    }
}

/// Statistics for the ten metric columns followed by `sample_size`.
pub fn descriptive_stats(dataset: &Dataset) -> Result<Vec<(String, ColumnStats)>, DataError> {
    if dataset.is_empty() {
        return Err(DataError::Empty);
    }
    let mut out = Vec::with_capacity(Metric::COUNT + 1);
    for m in Metric::ALL {
        let col: Vec<f64> = dataset
            .records
            .iter()
            .map(|r| f64::from(r.scores[m]))
            .collect();
        out.push((m.key().to_string(), ColumnStats::of(&col)?));
    }
    out.push((
        "sample_size".to_string(),
        ColumnStats::of(&dataset.sample_sizes())?,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column() {
        let s = ColumnStats::of(&[5.0; 4]).unwrap();
        assert_eq!((s.std, s.skewness, s.kurtosis), (0.0, 0.0, 0.0));
        assert_eq!(s.median, 5.0);
    }

    #[test]
    fn one_to_five() {
        let s = ColumnStats::of(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.mean, s.median, s.q1, s.q3), (3.0, 3.0, 2.0, 4.0));
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.skewness, 0.0);
        // population m4 / m2^2 - 3 = 6.8 / 4 - 3
        assert!((s.kurtosis - (6.8 / 4.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn right_tail_is_positive_skew() {
        let s = ColumnStats::of(&[1.0, 1.0, 2.0, 2.0, 3.0, 40.0]).unwrap();
        assert!(s.skewness > 0.0);
    }

    #[test]
    fn needs_two_values() {
        assert!(ColumnStats::of(&[1.0]).is_err());
    }

    #[test]
    fn interpolated_quantile() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert!((quantile(&v, 0.95) - 19.05).abs() < 1e-12);
    }
}
