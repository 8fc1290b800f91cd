//! The fitted transform chain: outlier trimming (training data only),
//! one-hot design encoding, standardisation and the log target.
//!
//! Feature layout: five one-hot design columns in [`DesignType::ENCODING_ORDER`]
//! followed by the ten metrics in CSV order. All fifteen columns are
//! standardised.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, DesignType, Metric, Scores, StudyRecord};
use crate::matrix::Matrix;
use crate::stats::quantile;

pub const FEATURE_COUNT: usize = 5 + Metric::COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("design group '{design}' has {count} record(s); trimming needs at least 2")]
    GroupTooSmall { design: DesignType, count: usize },
    #[error("cannot {0} an empty dataset")]
    Empty(&'static str),
    #[error("scaler fit needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("sample size {0} is below 1")]
    InvalidTarget(f64),
    #[error("expected {expected} feature columns, got {found}")]
    Width { expected: usize, found: usize },
    #[error("std multiplier must be positive, got {0}")]
    InvalidMultiplier(f64),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Feature names in matrix column order.
pub fn feature_names() -> Vec<String> {
    DesignType::ENCODING_ORDER
        .iter()
        .map(|d| format!("design_{}", d.label()))
        .chain(Metric::ALL.iter().map(|m| m.key().to_string()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMethod {
    Percentile95,
    StdRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimConfig {
    pub method: TrimMethod,
    pub group_by_design: bool,
    pub std_multiplier: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            method: TrimMethod::Percentile95,
            group_by_design: true,
            std_multiplier: 3.0,
        }
    }
}

fn keep_mask(values: &[f64], cfg: &TrimConfig) -> Vec<bool> {
    match cfg.method {
        TrimMethod::Percentile95 => {
            let p95 = quantile(values, 0.95);
            values.iter().map(|&v| v <= p95).collect()
        }
        TrimMethod::StdRule => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let limit = cfg.std_multiplier * var.sqrt();
            values.iter().map(|&v| (v - mean).abs() <= limit).collect()
        }
    }
}

/// Removes sample-size outliers, per design group or globally. Record order
/// is preserved.
pub fn trim_outliers(dataset: &Dataset, cfg: &TrimConfig) -> Result<Dataset, PreprocessError> {
    if dataset.is_empty() {
        return Err(PreprocessError::Empty("trim"));
    }
    if !(cfg.std_multiplier > 0.0) {
        return Err(PreprocessError::InvalidMultiplier(cfg.std_multiplier));
    }
    let groups: Vec<Vec<usize>> = if cfg.group_by_design {
        dataset.indices_by_design().into_values().collect()
    } else {
        vec![(0..dataset.len()).collect()]
    };
    let mut keep = vec![false; dataset.len()];
    for idx in groups {
        if idx.len() < 2 {
            return Err(PreprocessError::GroupTooSmall {
                design: dataset.records[idx[0]].design,
                count: idx.len(),
            });
        }
        let values: Vec<f64> = idx
            .iter()
            .map(|&i| f64::from(dataset.records[i].sample_size))
            .collect();
        for (&i, k) in idx.iter().zip(keep_mask(&values, cfg)) {
            keep[i] = k;
        }
    }
    let kept: Vec<usize> = (0..dataset.len()).filter(|&i| keep[i]).collect();
    Ok(dataset.subset(&kept))
}

pub fn log_target(y: f64) -> Result<f64, PreprocessError> {
    if !(y >= 1.0) {
        return Err(PreprocessError::InvalidTarget(y));
    }
    Ok(y.ln())
}

pub fn inverse_log_target(z: f64) -> f64 {
    z.exp()
}

pub fn encode_design(design: DesignType) -> [f64; 5] {
    let mut v = [0.0; 5];
    v[design.encoding_index()] = 1.0;
    v
}

/// Unscaled feature row: one-hot design then raw scores.
pub fn raw_features(design: DesignType, scores: &Scores) -> [f64; FEATURE_COUNT] {
    let mut row = [0.0; FEATURE_COUNT];
    row[..5].copy_from_slice(&encode_design(design));
    for (m, v) in scores.iter() {
        row[5 + m.index()] = f64::from(v);
    }
    row
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns whose standard deviation is at or below this are treated as constant.
const CONSTANT_EPS: f64 = 1e-12;

impl ScalerParams {
    pub fn fit(x: &Matrix) -> Result<ScalerParams, PreprocessError> {
        let n = x.rows();
        if n < 2 {
            return Err(PreprocessError::TooFewRows(n));
        }
        let nf = n as f64;
        let mut mean = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / nf).sqrt()).collect();
        Ok(ScalerParams { mean, std })
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if *s <= CONSTANT_EPS { 0.0 } else { (*v - m) / s };
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix, PreprocessError> {
        if x.cols() != self.mean.len() {
            return Err(PreprocessError::Width {
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            self.apply_row(out.row_mut(r));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    LogNatural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignEncoding {
    OneHot,
}

/// A fitted pipeline. Only [`fit_pipeline`] constructs one, so an unfitted
/// pipeline cannot be applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPipeline {
    pub trim: TrimConfig,
    pub target_transform: TargetTransform,
    pub design_encoding: DesignEncoding,
    /// Design label for each one-hot column.
    pub design_columns: Vec<DesignType>,
    pub feature_names: Vec<String>,
    pub scaler: ScalerParams,
}

/// Output of [`fit_pipeline`]: the pipeline plus the trimmed training records
/// it was fitted on.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub pipeline: PreprocessPipeline,
    pub train: Dataset,
}

pub fn fit_pipeline(train: &Dataset, trim: &TrimConfig) -> Result<FittedPipeline, PreprocessError> {
    if train.is_empty() {
        return Err(PreprocessError::Empty("fit a pipeline on"));
    }
    let trimmed = trim_outliers(train, trim)?;
    let rows: Vec<[f64; FEATURE_COUNT]> = trimmed
        .records
        .iter()
        .map(|r| raw_features(r.design, &r.scores))
        .collect();
    let raw = Matrix::from_rows(&rows).expect("fixed width rows");
    let scaler = ScalerParams::fit(&raw)?;
    Ok(FittedPipeline {
        pipeline: PreprocessPipeline {
            trim: *trim,
            target_transform: TargetTransform::LogNatural,
            design_encoding: DesignEncoding::OneHot,
            design_columns: DesignType::ENCODING_ORDER.to_vec(),
            feature_names: feature_names(),
            scaler,
        },
        train: trimmed,
    })
}

impl PreprocessPipeline {
    /// Standardised feature row for one study.
    pub fn features(&self, design: DesignType, scores: &Scores) -> Vec<f64> {
        let mut row = raw_features(design, scores).to_vec();
        self.scaler.apply_row(&mut row);
        row
    }

    pub fn transform_inputs(&self, inputs: &[(DesignType, Scores)]) -> Matrix {
        let mut data = Vec::with_capacity(inputs.len() * FEATURE_COUNT);
        for (d, s) in inputs {
            data.extend(self.features(*d, s));
        }
        Matrix::from_vec(inputs.len(), FEATURE_COUNT, data).expect("fixed width rows")
    }

    /// Features and log targets for labelled records. Never trims.
    pub fn transform(&self, records: &[StudyRecord]) -> (Matrix, Vec<f64>) {
        let inputs: Vec<(DesignType, Scores)> =
            records.iter().map(|r| (r.design, r.scores)).collect();
        let y = records
            .iter()
            .map(|r| f64::from(r.sample_size).ln())
            .collect();
        (self.transform_inputs(&inputs), y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;

    fn group(design: DesignType, sizes: &[u32]) -> Vec<StudyRecord> {
        sizes
            .iter()
            .map(|&n| StudyRecord {
                design,
                scores: Scores::uniform(15),
                sample_size: n,
            })
            .collect()
    }

    #[test]
    fn constant_group_unchanged() {
        let ds = Dataset::new(group(DesignType::Phenomenology, &[10; 4]), Provenance::Synthetic);
        assert_eq!(trim_outliers(&ds, &TrimConfig::default()).unwrap().records, ds.records);
    }

    #[test]
    fn removes_extreme_value() {
        let mut sizes: Vec<u32> = (1..=19).collect();
        sizes.push(1000);
        let ds = Dataset::new(group(DesignType::CaseStudy, &sizes), Provenance::Synthetic);
        let out = trim_outliers(&ds, &TrimConfig::default()).unwrap();
        // p95 = 19 + 0.05 * 981 = 68.05
        assert_eq!(out.len(), 19);
        assert!(out.records.iter().all(|r| r.sample_size != 1000));
    }

    #[test]
    fn std_rule_and_global_mode() {
        let mut sizes = vec![10u32; 30];
        sizes.push(500);
        let ds = Dataset::new(group(DesignType::CaseStudy, &sizes), Provenance::Synthetic);
        let cfg = TrimConfig {
            method: TrimMethod::StdRule,
            group_by_design: false,
            std_multiplier: 2.0,
        };
        assert_eq!(trim_outliers(&ds, &cfg).unwrap().len(), 30);
        let bad = TrimConfig {
            std_multiplier: 0.0,
            ..cfg
        };
        assert!(trim_outliers(&ds, &bad).is_err());
    }

    #[test]
    fn tiny_group_is_error() {
        let mut recs = group(DesignType::CaseStudy, &[1, 2, 3]);
        recs.extend(group(DesignType::NarrativeResearch, &[4]));
        let ds = Dataset::new(recs, Provenance::Synthetic);
        assert_eq!(
            trim_outliers(&ds, &TrimConfig::default()).unwrap_err(),
            PreprocessError::GroupTooSmall {
                design: DesignType::NarrativeResearch,
                count: 1
            }
        );
    }

    #[test]
    fn log_target_values() {
        assert_eq!(log_target(1.0).unwrap(), 0.0);
        let e2 = std::f64::consts::E.powi(2);
        assert!((log_target(e2).unwrap() - 2.0).abs() < 1e-12);
        let y = 22647.0;
        assert!((inverse_log_target(log_target(y).unwrap()) - y).abs() / y < 1e-12);
        assert!(log_target(0.5).is_err());
    }

    #[test]
    fn one_hot_identity() {
        assert_eq!(encode_design(DesignType::CaseStudy), [1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = encode_design(DesignType::Phenomenology);
        assert_eq!(p.iter().filter(|v| **v != 0.0).count(), 1);
        for (i, d) in DesignType::ENCODING_ORDER.iter().enumerate() {
            let v = encode_design(*d);
            for (j, x) in v.iter().enumerate() {
                assert_eq!(*x, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn scaler_examples() {
        let x = Matrix::from_rows(&[[10.0, 15.0], [20.0, 15.0]]).unwrap();
        let p = ScalerParams::fit(&x).unwrap();
        let t = p.apply(&x).unwrap();
        assert_eq!(t.col_values(0), vec![-1.0, 1.0]);
        assert_eq!(t.col_values(1), vec![0.0, 0.0]);
        let mut probe = vec![p.mean[0], 99.0];
        p.apply_row(&mut probe);
        assert_eq!(probe[0], 0.0);
        assert!(ScalerParams::fit(&Matrix::from_rows(&[[1.0]]).unwrap()).is_err());
    }

    #[test]
    fn inference_row_has_fifteen_columns() {
        let mut recs = group(DesignType::CaseStudy, &[5, 6, 7]);
        recs.extend(group(DesignType::GroundedTheory, &[8, 9, 10]));
        let ds = Dataset::new(recs, Provenance::Synthetic);
        let fitted = fit_pipeline(&ds, &TrimConfig::default()).unwrap();
        let x = fitted
            .pipeline
            .transform_inputs(&[(DesignType::Phenomenology, Scores::uniform(20))]);
        assert_eq!((x.rows(), x.cols()), (1, FEATURE_COUNT));
        let again = fit_pipeline(&ds, &TrimConfig::default()).unwrap();
        assert_eq!(again.pipeline, fitted.pipeline);
    }
}
