//! Regression learners with a uniform fit/predict contract.
//!
//! Every learner consumes a standardised feature matrix and log-space
//! targets, takes a seed, and produces an immutable [`RegressorModel`].

pub mod adaboost;
pub mod boosting;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod mlp;
pub mod params;
pub mod svr;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
pub use params::{HyperParams, ParamMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("expected {expected} feature columns, got {found}")]
    Width { expected: usize, found: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("targets have length {found}, features have {expected} rows")]
    TargetLength { expected: usize, found: usize },
    #[error("invalid hyperparameter '{name}': {message}")]
    InvalidParam { name: String, message: String },
    #[error("need at least {needed} training rows, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("optimizer did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("{0} is not a tree-based model")]
    NotTreeModel(ModelKind),
}

// Deserialised through a string so map keys show up in error paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String")]
pub enum ModelKind {
    Knn,
    DecisionTree,
    RandomForest,
    GradientBoosting,
    RegularizedBoosting,
    AdaboostR2,
    Ridge,
    Lasso,
    Svr,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Knn,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::RegularizedBoosting,
        ModelKind::AdaboostR2,
        ModelKind::Ridge,
        ModelKind::Lasso,
        ModelKind::Svr,
        ModelKind::Mlp,
    ];

    /// The nine compared learners (everything except lasso).
    pub const COMPARED: [ModelKind; 9] = [
        ModelKind::Knn,
        ModelKind::GradientBoosting,
        ModelKind::RandomForest,
        ModelKind::RegularizedBoosting,
        ModelKind::DecisionTree,
        ModelKind::Svr,
        ModelKind::Mlp,
        ModelKind::AdaboostR2,
        ModelKind::Ridge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::RegularizedBoosting => "regularized_boosting",
            ModelKind::AdaboostR2 => "adaboost_r2",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::Svr => "svr",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn is_tree_based(self) -> bool {
        matches!(
            self,
            ModelKind::DecisionTree
                | ModelKind::RandomForest
                | ModelKind::GradientBoosting
                | ModelKind::RegularizedBoosting
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model kind '{s}'"))
    }
}

impl TryFrom<String> for ModelKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Kind-specific fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedState {
    Knn(knn::KnnModel),
    Tree(tree::Tree),
    Forest(forest::ForestModel),
    Boosted(boosting::BoostedModel),
    AdaBoost(adaboost::AdaBoostModel),
    Linear(linear::LinearModel),
    Svr(svr::SvrModel),
    Mlp(mlp::MlpModel),
    /// Predicts one value everywhere.
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub kind: ModelKind,
    pub params: ParamMap,
    pub feature_count: usize,
    pub state: FittedState,
}

fn check_training(x: &Matrix, y: &[f64]) -> Result<(), LearnerError> {
    if y.len() != x.rows() {
        return Err(LearnerError::TargetLength {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(LearnerError::TooFewSamples { needed: 1, found: 0 });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite);
    }
    Ok(())
}

/// Fits a learner of `params.kind()` on `(x, y)`.
pub fn fit(params: &HyperParams, x: &Matrix, y: &[f64], seed: u64) -> Result<RegressorModel, LearnerError> {
    params.validate()?;
    check_training(x, y)?;
    let state = match params {
        HyperParams::Knn(p) => FittedState::Knn(knn::fit(p, x, y)?),
        HyperParams::DecisionTree(p) => FittedState::Tree(tree::fit_decision_tree(p, x, y, seed)),
        HyperParams::RandomForest(p) => FittedState::Forest(forest::fit(p, x, y, seed)),
        HyperParams::GradientBoosting(p) => {
            FittedState::Boosted(boosting::fit_gradient_boosting(p, x, y, seed))
        }
        HyperParams::RegularizedBoosting(p) => {
            FittedState::Boosted(boosting::fit_regularized_boosting(p, x, y, seed))
        }
        HyperParams::AdaboostR2(p) => FittedState::AdaBoost(adaboost::fit(p, x, y, seed)),
        HyperParams::Ridge(p) => FittedState::Linear(linear::fit_ridge(p, x, y)?),
        HyperParams::Lasso(p) => FittedState::Linear(linear::fit_lasso(p, x, y)?),
        HyperParams::Svr(p) => FittedState::Svr(svr::fit(p, x, y)?),
        HyperParams::Mlp(p) => FittedState::Mlp(mlp::fit(p, x, y, seed)?),
    };
    Ok(RegressorModel {
        kind: params.kind(),
        params: params.to_map(),
        feature_count: x.cols(),
        state,
    })
}

impl RegressorModel {
    /// A model of the given kind that ignores its input.
    pub fn constant(kind: ModelKind, value: f64, feature_count: usize) -> Self {
        Self {
            kind,
            params: ParamMap::new(),
            feature_count,
            state: FittedState::Constant { value },
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64, LearnerError> {
        if row.len() != self.feature_count {
            return Err(LearnerError::Width {
                expected: self.feature_count,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite);
        }
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        match &self.state {
            FittedState::Knn(m) => m.predict_row(row),
            FittedState::Tree(t) => t.predict_row(row),
            FittedState::Forest(m) => m.predict_row(row),
            FittedState::Boosted(m) => m.predict_row(row),
            FittedState::AdaBoost(m) => m.predict_row(row),
            FittedState::Linear(m) => m.predict_row(row),
            FittedState::Svr(m) => m.predict_row(row),
            FittedState::Mlp(m) => m.predict_row(row),
            FittedState::Constant { value } => *value,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, LearnerError> {
        if x.cols() != self.feature_count {
            return Err(LearnerError::Width {
                expected: self.feature_count,
                found: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(LearnerError::NonFinite);
        }
        Ok(x.iter_rows().map(|r| self.predict_unchecked(r)).collect())
    }

    /// Trees making up a tree-based model, for importance computations.
    pub fn trees(&self) -> Result<Vec<&tree::Tree>, LearnerError> {
        match &self.state {
            FittedState::Tree(t) => Ok(vec![t]),
            FittedState::Forest(f) => Ok(f.trees.iter().collect()),
            FittedState::Boosted(b) => Ok(b.trees.iter().collect()),
            _ => Err(LearnerError::NotTreeModel(self.kind)),
        }
    }
}
