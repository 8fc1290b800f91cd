//! Per-model comparison tables.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::folds::FoldPlan;
use super::grid::{grid_search, Grid, GridResult};
use super::metrics::{compute_metrics, MetricSet, MetricUnit};
use super::EvalError;
use crate::learners::{self, HyperParams, ModelKind, ParamMap, RegressorModel};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Stream};

/// Index of the seed stream used when refitting a grid winner.
pub const REFIT_STREAM_INDEX: u64 = 1 << 32;

/// Hex SHA-256 of raw bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: ModelKind,
    pub test_r2: Option<f64>,
    pub train_r2: Option<f64>,
    pub test_mae_log: Option<f64>,
    pub test_mae_raw: Option<f64>,
    pub test_rmse_log: Option<f64>,
    pub cv_mae_log: Option<f64>,
    pub cv_rmse_log: Option<f64>,
    pub best_params: Option<ParamMap>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn failed(kind: ModelKind, error: String) -> Self {
        Self {
            kind,
            test_r2: None,
            train_r2: None,
            test_mae_log: None,
            test_mae_raw: None,
            test_rmse_log: None,
            cv_mae_log: None,
            cv_rmse_log: None,
            best_params: None,
            error: Some(error),
        }
    }
}

/// Train/test metrics of the stacked model, reported beside the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingSummary {
    pub base_kinds: Vec<ModelKind>,
    pub test_r2: f64,
    pub oof_r2: f64,
    pub test_mae_log: f64,
    pub test_mae_raw: f64,
    pub test_rmse_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    pub stacking: Option<StackingSummary>,
    /// SHA-256 of the training CSV bytes.
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub folds: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub timestamp: String,
}

impl ComparisonReport {
    pub fn row(&self, kind: ModelKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "test_r2",
            "train_r2",
            "test_mae_log",
            "test_mae_raw",
            "test_rmse_log",
            "cv_mae_log",
            "cv_rmse_log",
            "best_params",
            "error",
        ])
        .expect("in-memory write");
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.kind.name().to_string(),
                num(r.test_r2),
                num(r.train_r2),
                num(r.test_mae_log),
                num(r.test_mae_raw),
                num(r.test_rmse_log),
                num(r.cv_mae_log),
                num(r.cv_rmse_log),
                r.best_params
                    .as_ref()
                    .map(|p| serde_json::to_string(p).expect("params serialize"))
                    .unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// One predicted-vs-true pair in participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub model: String,
    pub split: String,
    pub actual: f64,
    pub predicted: f64,
}

pub fn plot_csv(points: &[PlotPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Held-out and training data in model space (standardised features, log targets).
pub struct EvalData<'a> {
    pub x_train: &'a Matrix,
    pub y_train: &'a [f64],
    pub x_test: &'a Matrix,
    pub y_test: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct KindOutcome {
    pub row: ReportRow,
    pub model: Option<RegressorModel>,
    pub grid: Option<GridResult>,
    pub test_pred: Vec<f64>,
    pub train_pred: Vec<f64>,
}

fn raw(v: &[f64]) -> Vec<f64> {
    v.iter().map(|z| z.exp()).collect()
}

/// Grid search on train, refit the winner on all of train, score both sets.
pub fn evaluate_kind(
    kind: ModelKind,
    grid: &Grid,
    data: &EvalData<'_>,
    plan: &FoldPlan,
    seed: u64,
) -> KindOutcome {
    match try_evaluate(kind, grid, data, plan, seed) {
        Ok(out) => out,
        Err(e) => KindOutcome {
            row: ReportRow::failed(kind, e.to_string()),
            model: None,
            grid: None,
            test_pred: Vec::new(),
            train_pred: Vec::new(),
        },
    }
}

fn try_evaluate(
    kind: ModelKind,
    grid: &Grid,
    data: &EvalData<'_>,
    plan: &FoldPlan,
    seed: u64,
) -> Result<KindOutcome, EvalError> {
    let search = grid_search(kind, grid, data.x_train, data.y_train, plan, seed)?;
    let params = HyperParams::from_map(kind, &search.best_params)?;
    let model = learners::fit(
        &params,
        data.x_train,
        data.y_train,
        derive_seed(seed, Stream::Learner, REFIT_STREAM_INDEX),
    )?;
    let train_pred = model.predict(data.x_train)?;
    let test_pred = model.predict(data.x_test)?;
    let train = compute_metrics(data.y_train, &train_pred, MetricUnit::LogSpace)?;
    let test = compute_metrics(data.y_test, &test_pred, MetricUnit::LogSpace)?;
    let test_raw = compute_metrics(&raw(data.y_test), &raw(&test_pred), MetricUnit::RawSpace)?;
    let best = search.best().clone();
    Ok(KindOutcome {
        row: ReportRow {
            kind,
            test_r2: Some(test.r2),
            train_r2: Some(train.r2),
            test_mae_log: Some(test.mae),
            test_mae_raw: Some(test_raw.mae),
            test_rmse_log: Some(test.rmse),
            cv_mae_log: best.cv_mae,
            cv_rmse_log: best.cv_rmse,
            best_params: Some(model.params.clone()),
            error: None,
        },
        model: Some(model),
        grid: Some(search),
        test_pred,
        train_pred,
    })
}

/// Log- and raw-space metrics for a prediction vector.
pub fn metric_pair(y_log: &[f64], pred_log: &[f64]) -> Result<(MetricSet, MetricSet), EvalError> {
    Ok((
        compute_metrics(y_log, pred_log, MetricUnit::LogSpace)?,
        compute_metrics(&raw(y_log), &raw(pred_log), MetricUnit::RawSpace)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::grid::default_grids;
    use crate::eval::kfold_split;

    #[test]
    fn fingerprint_is_sha256() {
        assert_eq!(
            fingerprint(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn constant_target_scores_perfectly() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [f64::from(i % 4), f64::from(i % 5)]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = vec![3.0_f64.ln(); 20];
        let data = EvalData {
            x_train: &x,
            y_train: &y,
            x_test: &x,
            y_test: &y,
        };
        let plan = kfold_split(20, 5, 1).unwrap();
        let grids = default_grids();
        for kind in [ModelKind::Knn, ModelKind::DecisionTree, ModelKind::Ridge, ModelKind::AdaboostR2] {
            let out = evaluate_kind(kind, &grids[&kind], &data, &plan, 1);
            assert_eq!(out.row.error, None, "{kind}");
            assert!(out.row.test_mae_log.unwrap() < 1e-12, "{kind}");
            assert_eq!(out.row.test_r2, Some(if out.row.test_mae_log == Some(0.0) { 1.0 } else { 0.0 }));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let report = ComparisonReport {
            rows: vec![ReportRow::failed(ModelKind::Svr, "boom".into())],
            stacking: None,
            dataset_fingerprint: String::new(),
            seed: 0,
            folds: 5,
            train_size: 0,
            test_size: 0,
            timestamp: String::new(),
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("model,test_r2"));
        assert_eq!(lines[1], "svr,,,,,,,,,boom");
    }
}
