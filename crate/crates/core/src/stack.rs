//! Stacked generalisation over out-of-fold base predictions, and the plain
//! nine-model average used for recommendations.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::report::REFIT_STREAM_INDEX;
use crate::eval::{kfold_split, EvalError, FoldPlan};
use crate::learners::linear::{elastic_net, ridge_solve, LinearModel};
use crate::learners::{self, HyperParams, LearnerError, ModelKind, RegressorModel};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Stream};

/// Ridge added to the least-squares meta system.
pub const META_STABILIZER: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StackError {
    #[error("stack needs at least one base model")]
    NoBaseModels,
    #[error("base kind {0} listed twice")]
    DuplicateKind(ModelKind),
    #[error("missing prediction for {0}")]
    MissingKind(ModelKind),
    #[error("unexpected prediction for {0}")]
    UnexpectedKind(ModelKind),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

pub const DEFAULT_BASE_KINDS: [ModelKind; 5] = [
    ModelKind::Knn,
    ModelKind::GradientBoosting,
    ModelKind::RandomForest,
    ModelKind::RegularizedBoosting,
    ModelKind::DecisionTree,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetaSpec {
    /// Least squares with a `1e-8` ridge term.
    Linear,
    /// `1/(2n)|r|^2 + lambda * (mix |w|_1 + (1 - mix)/2 |w|^2)`.
    ElasticNet { lambda: f64, mix: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub folds: usize,
    pub meta: MetaSpec,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            meta: MetaSpec::Linear,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub spec: MetaSpec,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl MetaModel {
    pub fn combine(&self, base: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(base).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub base_kinds: Vec<ModelKind>,
    /// Base learners refit on the whole training set, in `base_kinds` order.
    pub base_models: Vec<RegressorModel>,
    pub meta: MetaModel,
    pub fold_count: usize,
    pub seed: u64,
}

/// Out-of-fold matrix for `m` base learners given a fit-and-predict closure.
///
/// `fit_predict(fold, j, train, test)` must train base learner `j` on the rows in
/// `train` and return predictions for the rows in `test`. Cell `(i, j)` of the
/// result holds learner `j`'s prediction for row `i` from the model trained
/// without `i`'s fold.
pub fn build_oof_with<F>(plan: &FoldPlan, m: usize, fit_predict: F) -> Result<Matrix, StackError>
where
    F: Fn(usize, usize, &[usize], &[usize]) -> Result<Vec<f64>, LearnerError> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..plan.k).flat_map(|f| (0..m).map(move |j| (f, j))).collect();
    let results: Vec<Result<(usize, usize, Vec<usize>, Vec<f64>), LearnerError>> = jobs
        .into_par_iter()
        .map(|(fold, j)| {
            let train = plan.train_indices(fold);
            let test = plan.test_indices(fold);
            let pred = fit_predict(fold, j, &train, &test)?;
            Ok((fold, j, test, pred))
        })
        .collect();
    let mut oof = Matrix::zeros(plan.len(), m);
    for r in results {
        let (_, j, test, pred) = r?;
        for (i, p) in test.into_iter().zip(pred) {
            oof.set(i, j, p);
        }
    }
    Ok(oof)
}

fn check_kinds(base: &[HyperParams]) -> Result<(), StackError> {
    if base.is_empty() {
        return Err(StackError::NoBaseModels);
    }
    for (i, p) in base.iter().enumerate() {
        if base[..i].iter().any(|q| q.kind() == p.kind()) {
            return Err(StackError::DuplicateKind(p.kind()));
        }
    }
    Ok(())
}

/// Out-of-fold predictions of the configured base learners.
pub fn build_oof_matrix(
    x: &Matrix,
    y: &[f64],
    base: &[HyperParams],
    k: usize,
    seed: u64,
) -> Result<(Matrix, FoldPlan), StackError> {
    check_kinds(base)?;
    let plan = kfold_split(x.rows(), k, seed)?;
    let oof = build_oof_with(&plan, base.len(), |fold, j, train, test| {
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = learners::fit(
            &base[j],
            &x.select_rows(train),
            &ty,
            derive_seed(seed, Stream::Learner, fold as u64),
        )?;
        model.predict(&x.select_rows(test))
    })?;
    Ok((oof, plan))
}

pub fn fit_meta(oof: &Matrix, y: &[f64], spec: MetaSpec) -> Result<MetaModel, StackError> {
    let LinearModel { coef, intercept } = match spec {
        MetaSpec::Linear => ridge_solve(oof, y, META_STABILIZER, true)?,
        MetaSpec::ElasticNet { lambda, mix } => {
            elastic_net(oof, y, lambda * mix, lambda * (1.0 - mix), true, 1e-10, 100_000)?
        }
    };
    Ok(MetaModel {
        spec,
        coef,
        intercept,
    })
}

/// Fits the meta-learner on out-of-fold predictions, then refits every base
/// learner on the full training set. Also returns the OOF matrix.
pub fn fit_stacked(
    x: &Matrix,
    y: &[f64],
    base: &[HyperParams],
    cfg: &StackConfig,
) -> Result<(StackedModel, Matrix), StackError> {
    let (oof, _) = build_oof_matrix(x, y, base, cfg.folds, cfg.seed)?;
    let meta = fit_meta(&oof, y, cfg.meta)?;
    let refit_seed = derive_seed(cfg.seed, Stream::Learner, REFIT_STREAM_INDEX);
    let base_models = base
        .par_iter()
        .map(|p| learners::fit(p, x, y, refit_seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        StackedModel {
            base_kinds: base.iter().map(HyperParams::kind).collect(),
            base_models,
            meta,
            fold_count: cfg.folds,
            seed: cfg.seed,
        },
        oof,
    ))
}

impl StackedModel {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64, LearnerError> {
        let base = self
            .base_models
            .iter()
            .map(|m| m.predict_row(row))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.meta.combine(&base))
    }

    /// Log-space predictions.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, LearnerError> {
        let columns = self
            .base_models
            .iter()
            .map(|m| m.predict(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((0..x.rows())
            .map(|i| {
                let row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                self.meta.combine(&row)
            })
            .collect())
    }
}

/// Arithmetic mean of exactly the nine compared learners' raw-scale
/// predictions.
pub fn ensemble_average(per_model: &BTreeMap<ModelKind, f64>) -> Result<f64, StackError> {
    for kind in ModelKind::COMPARED {
        if !per_model.contains_key(&kind) {
            return Err(StackError::MissingKind(kind));
        }
    }
    if let Some(extra) = per_model.keys().find(|k| !ModelKind::COMPARED.contains(k)) {
        return Err(StackError::UnexpectedKind(*extra));
    }
    Ok(ModelKind::COMPARED.iter().map(|k| per_model[k]).sum::<f64>() / ModelKind::COMPARED.len() as f64)
}
