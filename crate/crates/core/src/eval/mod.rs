//! Cross-validation, model selection, importance and comparison reports.

pub mod folds;
pub mod grid;
pub mod importance;
pub mod metrics;
pub mod report;

use thiserror::Error;

use crate::learners::{LearnerError, ModelKind};

pub use folds::{kfold_split, FoldPlan};
pub use grid::{default_grids, grid_search, reference_best_points, Grid, GridResult, Grids};
pub use importance::{impurity_importance, permutation_importance};
pub use metrics::{compute_metrics, MetricSet, MetricUnit};
pub use report::{ComparisonReport, ReportRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot split {n} records into {k} folds (need 2 <= k <= n)")]
    FoldCount { n: usize, k: usize },
    #[error("length mismatch: {expected} true values, {found} predictions")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("grid for {0} has no cells")]
    EmptyGrid(ModelKind),
    #[error("grid axis '{0}' must be a non-empty list")]
    BadAxis(String),
    #[error("every grid cell failed for {kind}: {last}")]
    AllCellsFailed { kind: ModelKind, last: String },
    #[error("no grid configured for {0}")]
    MissingGrid(ModelKind),
    #[error("repeats must be at least 1")]
    Repeats,
    #[error(transparent)]
    Learner(#[from] LearnerError),
}
