//! End-to-end training: balance, split, preprocess, select and fit every
//! learner, stack, calibrate, and assemble a [`ModelBundle`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{importance_map, ImportanceSet, ModelBundle, TrainingMetadata, FORMAT_VERSION};
use crate::conformal::{calibrate, CalibrationProtocol, ConformalError};
use crate::data::{balance_by_design, train_test_split, DataError, Dataset, ScoreSet};
use crate::eval::importance::{group_design, normalise};
use crate::eval::report::{evaluate_kind, metric_pair, EvalData, PlotPoint, StackingSummary};
use crate::eval::{
    compute_metrics, default_grids, impurity_importance, kfold_split, permutation_importance, ComparisonReport,
    EvalError, Grids, MetricUnit, ReportRow,
};
use crate::learners::{self, HyperParams, LearnerError, ModelKind, ParamMap, RegressorModel};
use crate::matrix::Matrix;
use crate::preprocess::{fit_pipeline, PreprocessError, TrimConfig};
use crate::rng::{derive_seed, Stream};
use crate::stack::{fit_stacked, MetaSpec, StackConfig, StackError, DEFAULT_BASE_KINDS};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("every learner failed; last error: {0}")]
    AllFailed(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub folds: usize,
    /// Downsample every design to the smallest design's count first.
    pub balance: bool,
    pub trim: TrimConfig,
    pub kinds: Vec<ModelKind>,
    /// Also fit a lasso with default settings (not part of the ensemble).
    pub include_lasso: bool,
    pub grids: Grids,
    pub stack_base: Vec<ModelKind>,
    pub stack_meta: MetaSpec,
    pub calibration: CalibrationProtocol,
    /// Share of the training partition held back when `calibration` is `dedicated`.
    pub calibration_fraction: f64,
    pub permutation_repeats: usize,
    pub score_set: ScoreSet,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            test_fraction: 0.2,
            folds: 5,
            balance: true,
            trim: TrimConfig::default(),
            kinds: ModelKind::COMPARED.to_vec(),
            include_lasso: false,
            grids: default_grids(),
            stack_base: DEFAULT_BASE_KINDS.to_vec(),
            stack_meta: MetaSpec::Linear,
            calibration: CalibrationProtocol::TestSplit,
            calibration_fraction: 0.2,
            permutation_repeats: 5,
            score_set: ScoreSet::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie strictly between 0 and 1");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.kinds.is_empty() {
            return bad("no learners selected");
        }
        for k in &self.kinds {
            if *k == ModelKind::Lasso {
                return bad("lasso is enabled with include_lasso, not in kinds");
            }
            if !self.grids.contains_key(k) {
                return Err(EvalError::MissingGrid(*k).into());
            }
        }
        for k in &self.stack_base {
            if !self.kinds.contains(k) {
                return bad(&format!("stack base {k} is not among the trained learners"));
            }
        }
        if self.calibration == CalibrationProtocol::Dedicated
            && !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0)
        {
            return bad("calibration_fraction must lie strictly between 0 and 1");
        }
        if self.permutation_repeats == 0 {
            return bad("permutation_repeats must be at least 1");
        }
        Ok(())
    }
}

pub struct TrainOutput {
    pub bundle: ModelBundle,
    /// Predicted-vs-true pairs in participants for every fitted learner.
    pub plot: Vec<PlotPoint>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Log of the raw-scale average of the nine compared learners' predictions.
pub fn ensemble_log_predictions(models: &BTreeMap<ModelKind, RegressorModel>, x: &Matrix) -> Result<Vec<f64>, LearnerError> {
    let mut sum = vec![0.0; x.rows()];
    for kind in ModelKind::COMPARED {
        for (s, p) in sum.iter_mut().zip(models[&kind].predict(x)?) {
            *s += p.exp();
        }
    }
    Ok(sum.into_iter().map(|s| (s / ModelKind::COMPARED.len() as f64).ln()).collect())
}

fn raw_points(model: &str, split: &str, y: &[f64], pred: &[f64]) -> Vec<PlotPoint> {
    y.iter()
        .zip(pred)
        .map(|(t, p)| PlotPoint {
            model: model.to_string(),
            split: split.to_string(),
            actual: t.exp(),
            predicted: p.exp(),
        })
        .collect()
}

pub fn train(
    dataset: &Dataset,
    dataset_fingerprint: &str,
    cfg: &TrainConfig,
    timestamp: &str,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let base = if cfg.balance {
        balance_by_design(dataset, seed)?
    } else {
        dataset.clone()
    };
    let (train_part, test_part) = train_test_split(&base, cfg.test_fraction, seed)?;
    let (fit_part, cal_part) = match cfg.calibration {
        CalibrationProtocol::TestSplit => (train_part, None),
        CalibrationProtocol::Dedicated => {
            let (fit, cal) = train_test_split(
                &train_part,
                cfg.calibration_fraction,
                derive_seed(seed, Stream::Conformal, 0),
            )?;
            (fit, Some(cal))
        }
    };
    let fitted = fit_pipeline(&fit_part, &cfg.trim)?;
    let pipeline = fitted.pipeline;
    let (x_train, y_train) = pipeline.transform(&fitted.train.records);
    let (x_test, y_test) = pipeline.transform(&test_part.records);
    let plan = kfold_split(x_train.rows(), cfg.folds, seed)?;
    let data = EvalData {
        x_train: &x_train,
        y_train: &y_train,
        x_test: &x_test,
        y_test: &y_test,
    };

    let mut rows = Vec::new();
    let mut models = BTreeMap::new();
    let mut winners: BTreeMap<ModelKind, HyperParams> = BTreeMap::new();
    let mut plot = Vec::new();
    let mut last_error = String::new();
    for &kind in &cfg.kinds {
        let mut out = evaluate_kind(kind, &cfg.grids[&kind], &data, &plan, seed);
        match out.model.take() {
            Some(model) => {
                winners.insert(kind, HyperParams::from_map(kind, &model.params)?);
                plot.extend(raw_points(kind.name(), "train", &y_train, &out.train_pred));
                plot.extend(raw_points(kind.name(), "test", &y_test, &out.test_pred));
                models.insert(kind, model);
            }
            None => {
                let err = out.row.error.clone().unwrap_or_default();
                last_error = format!("{kind}: {err}");
                // The service needs every compared learner; a failed one
                // serves the training mean and the report says so.
                out.row.error = Some(format!("{err}; serving the training mean instead"));
                models.insert(kind, RegressorModel::constant(kind, mean(&y_train), x_train.cols()));
            }
        }
        rows.push(out.row);
    }
    if winners.is_empty() {
        return Err(TrainError::AllFailed(last_error));
    }
    for kind in ModelKind::COMPARED {
        models
            .entry(kind)
            .or_insert_with(|| RegressorModel::constant(kind, mean(&y_train), x_train.cols()));
    }
    if cfg.include_lasso {
        let lasso = learners::fit(&HyperParams::defaults(ModelKind::Lasso), &x_train, &y_train, seed)?;
        models.insert(ModelKind::Lasso, lasso);
    }

    // Stacking over whichever configured bases were fitted.
    let stack_params: Vec<HyperParams> = cfg
        .stack_base
        .iter()
        .filter_map(|k| winners.get(k).cloned())
        .collect();
    let (stacked, stacking) = if stack_params.is_empty() {
        (None, None)
    } else {
        let stack_cfg = StackConfig {
            folds: cfg.folds,
            meta: cfg.stack_meta,
            seed,
        };
        match fit_stacked(&x_train, &y_train, &stack_params, &stack_cfg) {
            Ok((model, oof)) => {
                let oof_pred: Vec<f64> = oof.iter_rows().map(|r| model.meta.combine(r)).collect();
                let oof_r2 = compute_metrics(&y_train, &oof_pred, MetricUnit::LogSpace)?.r2;
                let test_pred = model.predict(&x_test)?;
                let (log, raw) = metric_pair(&y_test, &test_pred)?;
                plot.extend(raw_points("stacking", "test", &y_test, &test_pred));
                let summary = StackingSummary {
                    base_kinds: model.base_kinds.clone(),
                    test_r2: log.r2,
                    oof_r2,
                    test_mae_log: log.mae,
                    test_mae_raw: raw.mae,
                    test_rmse_log: log.rmse,
                };
                (Some(model), Some(summary))
            }
            Err(StackError::Learner(e)) => return Err(e.into()),
            Err(StackError::Eval(e)) => return Err(e.into()),
            Err(e) => return Err(TrainError::Config(e.to_string())),
        }
    };

    // Conformal calibration of the nine-model average.
    let (x_cal, y_cal) = match &cal_part {
        Some(cal) => pipeline.transform(&cal.records),
        None => (x_test.clone(), y_test.clone()),
    };
    let cal_pred = ensemble_log_predictions(&models, &x_cal)?;
    let conformal = calibrate(&y_cal, &cal_pred, cfg.calibration)?;

    // Importances from the forest when available, else the first tree model.
    let source = [
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::RegularizedBoosting,
        ModelKind::DecisionTree,
    ]
    .into_iter()
    .find(|k| winners.contains_key(k));
    let importances = match source {
        Some(kind) => {
            let model = &models[&kind];
            let names = &pipeline.feature_names;
            let imp = impurity_importance(model)?;
            let perm = normalise(&permutation_importance(
                model,
                &x_test,
                &y_test,
                cfg.permutation_repeats,
                seed,
            )?);
            let named = |v: &[f64]| names.iter().cloned().zip(v.iter().copied()).collect::<Vec<_>>();
            ImportanceSet {
                source: Some(kind),
                impurity: importance_map(named(&imp)),
                permutation: importance_map(named(&perm)),
                impurity_grouped: importance_map(group_design(names, &imp)),
                permutation_grouped: importance_map(group_design(names, &perm)),
            }
        }
        None => ImportanceSet::default(),
    };

    let report = ComparisonReport {
        rows,
        stacking,
        dataset_fingerprint: dataset_fingerprint.to_string(),
        seed,
        folds: cfg.folds,
        train_size: x_train.rows(),
        test_size: x_test.rows(),
        timestamp: timestamp.to_string(),
    };
    let metadata = TrainingMetadata {
        seed,
        dataset_fingerprint: dataset_fingerprint.to_string(),
        grids: cfg.grids.clone(),
        score_set: cfg.score_set.clone(),
        train_size: x_train.rows(),
        test_size: x_test.rows(),
        calibration_size: y_cal.len(),
        config: serde_json::to_value(cfg).expect("config serializes"),
    };
    Ok(TrainOutput {
        bundle: ModelBundle {
            format_version: FORMAT_VERSION,
            pipeline,
            models,
            stacked,
            conformal,
            report,
            importances,
            metadata,
        },
        plot,
    })
}

/// Metrics of an already trained bundle on a labelled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: ComparisonReport,
    /// The dataset is byte-identical to the one the bundle was trained on,
    /// so these are not held-out scores.
    pub leakage_warning: bool,
}

/// Scores every model in `bundle` on `dataset` (no trimming, no refit).
/// Only the `test_*` columns of the rows are filled.
pub fn evaluate_bundle(
    bundle: &ModelBundle,
    dataset: &Dataset,
    dataset_fingerprint: &str,
    timestamp: &str,
) -> Result<Evaluation, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Data(DataError::Empty));
    }
    let (x, y) = bundle.pipeline.transform(&dataset.records);
    let mut rows = Vec::new();
    for (kind, model) in &bundle.models {
        let mut row = ReportRow::failed(*kind, String::new());
        row.error = None;
        match model.predict(&x) {
            Ok(pred) => {
                let (log, raw) = metric_pair(&y, &pred)?;
                row.test_r2 = Some(log.r2);
                row.test_mae_log = Some(log.mae);
                row.test_mae_raw = Some(raw.mae);
                row.test_rmse_log = Some(log.rmse);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let stacking = match &bundle.stacked {
        Some(model) => {
            let pred = model.predict(&x)?;
            let (log, raw) = metric_pair(&y, &pred)?;
            Some(StackingSummary {
                base_kinds: model.base_kinds.clone(),
                test_r2: log.r2,
                oof_r2: bundle.report.stacking.as_ref().map_or(f64::NAN, |s| s.oof_r2),
                test_mae_log: log.mae,
                test_mae_raw: raw.mae,
                test_rmse_log: log.rmse,
            })
        }
        None => None,
    };
    Ok(Evaluation {
        report: ComparisonReport {
            rows,
            stacking,
            dataset_fingerprint: dataset_fingerprint.to_string(),
            seed: bundle.metadata.seed,
            folds: bundle.report.folds,
            train_size: bundle.metadata.train_size,
            test_size: x.rows(),
            timestamp: timestamp.to_string(),
        },
        leakage_warning: dataset_fingerprint == bundle.metadata.dataset_fingerprint,
    })
}

/// Grid overrides: a JSON object of `kind -> {axis: [values]}`; kinds not
/// mentioned keep their defaults.
pub fn grids_with_overrides(overrides: &BTreeMap<ModelKind, ParamMap>) -> Grids {
    let mut grids = default_grids();
    for (k, g) in overrides {
        grids.insert(*k, crate::eval::Grid(g.clone()));
    }
    grids
}
