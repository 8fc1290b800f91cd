//! Exhaustive grid search scored by k-fold cross-validation.
//!
//! Cells are ranked by mean fold MAE (log space); ties go to the lower mean
//! fold RMSE and then to the earlier cell in grid order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::folds::FoldPlan;
use super::metrics::{compute_metrics, MetricUnit};
use super::EvalError;
use crate::learners::{self, HyperParams, LearnerError, ModelKind, ParamMap};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Stream};

/// Hyperparameter axes. Each value lists the settings to try; a scalar is
/// treated as a single setting. Axis order is preserved.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Grid(pub ParamMap);

pub type Grids = BTreeMap<ModelKind, Grid>;

impl Grid {
    /// Cartesian product of the axes; the last axis varies fastest.
    pub fn cells(&self) -> Result<Vec<ParamMap>, EvalError> {
        let mut cells = vec![ParamMap::new()];
        for (axis, values) in &self.0 {
            let values: Vec<Value> = match values {
                Value::Array(v) if v.is_empty() => return Err(EvalError::BadAxis(axis.clone())),
                Value::Array(v) => v.clone(),
                other => vec![other.clone()],
            };
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |v| {
                        let mut next = cell.clone();
                        next.insert(axis.clone(), v.clone());
                        next
                    })
                })
                .collect();
        }
        Ok(cells)
    }

    /// Whether some cell resolves to the same hyperparameters as `point`.
    pub fn contains(&self, kind: ModelKind, point: &ParamMap) -> bool {
        let Ok(target) = HyperParams::from_map(kind, point) else {
            return false;
        };
        self.cells().is_ok_and(|cells| {
            cells
                .iter()
                .any(|c| HyperParams::from_map(kind, c).is_ok_and(|p| p == target))
        })
    }
}

fn object(v: Value) -> ParamMap {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("literal objects"),
    }
}

/// Shipped grids for the nine compared learners.
pub fn default_grids() -> Grids {
    let mut g = Grids::new();
    let mut put = |kind, v| {
        g.insert(kind, Grid(object(v)));
    };
    put(
        ModelKind::Knn,
        json!({"n_neighbors": [5, 10, 15], "p": [1, 2], "weights": ["uniform", "distance"]}),
    );
    put(
        ModelKind::GradientBoosting,
        json!({"learning_rate": [0.05, 0.1], "loss": ["squared_error"], "max_depth": [3, 7],
               "n_estimators": [200], "subsample": [0.8, 1.0]}),
    );
    put(
        ModelKind::RandomForest,
        json!({"max_depth": [null, 10], "max_features": ["sqrt"], "min_samples_leaf": [1, 2],
               "min_samples_split": [2], "n_estimators": [200]}),
    );
    put(
        ModelKind::RegularizedBoosting,
        json!({"colsample_bytree": [0.8, 1.0], "learning_rate": [0.05, 0.1], "max_depth": [3, 7],
               "n_estimators": [200], "reg_alpha": [0], "reg_lambda": [1.0, 1.5], "subsample": [0.8]}),
    );
    put(
        ModelKind::DecisionTree,
        json!({"criterion": ["squared_error"], "max_depth": [null, 5, 10], "max_features": ["sqrt", "all"],
               "min_samples_leaf": [1, 3], "min_samples_split": [2]}),
    );
    put(
        ModelKind::Svr,
        json!({"C": [1.0, 10.0], "degree": [2], "gamma": ["scale"], "kernel": ["rbf"]}),
    );
    put(
        ModelKind::Mlp,
        json!({"activation": ["logistic"], "alpha": [0.001, 0.01], "early_stopping": [true],
               "hidden_layer_sizes": [[30]], "learning_rate": ["constant"], "solver": ["adam", "lbfgs"]}),
    );
    put(
        ModelKind::AdaboostR2,
        json!({"learning_rate": [0.05, 0.1], "loss": ["square", "linear"], "n_estimators": [100]}),
    );
    put(ModelKind::Ridge, json!({"alpha": [1.0, 10.0, 50.0, 100.0]}));
    g
}

/// Best-parameter points the default grids are required to contain.
pub fn reference_best_points() -> Vec<(ModelKind, ParamMap)> {
    vec![
        (
            ModelKind::Knn,
            object(json!({"n_neighbors": 15, "p": 1, "weights": "distance"})),
        ),
        (
            ModelKind::GradientBoosting,
            object(json!({"learning_rate": 0.1, "loss": "squared_error", "max_depth": 7,
                          "n_estimators": 200, "subsample": 0.8})),
        ),
        (
            ModelKind::RandomForest,
            object(json!({"max_depth": null, "max_features": "sqrt", "min_samples_leaf": 1,
                          "min_samples_split": 2, "n_estimators": 200})),
        ),
        (
            ModelKind::RegularizedBoosting,
            object(json!({"colsample_bytree": 1.0, "learning_rate": 0.1, "max_depth": 7,
                          "n_estimators": 200, "reg_alpha": 0, "reg_lambda": 1.5, "subsample": 0.8})),
        ),
        (
            ModelKind::DecisionTree,
            object(json!({"criterion": "squared_error", "max_depth": null, "max_features": "sqrt",
                          "min_samples_leaf": 1, "min_samples_split": 2})),
        ),
        (
            ModelKind::Svr,
            object(json!({"C": 10.0, "degree": 2, "gamma": "scale", "kernel": "rbf"})),
        ),
        (
            ModelKind::Mlp,
            object(json!({"activation": "logistic", "alpha": 0.01, "early_stopping": true,
                          "hidden_layer_sizes": [30], "learning_rate": "constant", "solver": "lbfgs"})),
        ),
        (
            ModelKind::AdaboostR2,
            object(json!({"learning_rate": 0.05, "loss": "square", "n_estimators": 100})),
        ),
        (ModelKind::Ridge, object(json!({"alpha": 50.0}))),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub params: ParamMap,
    pub cv_mae: Option<f64>,
    pub cv_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub kind: ModelKind,
    pub best_index: usize,
    pub best_params: ParamMap,
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn best(&self) -> &CellResult {
        &self.cells[self.best_index]
    }
}

/// Mean per-fold (MAE, RMSE) of `params` under `plan`.
pub fn cv_score(
    params: &HyperParams,
    x: &Matrix,
    y: &[f64],
    plan: &FoldPlan,
    seed: u64,
) -> Result<(f64, f64), LearnerError> {
    let (mut mae, mut rmse) = (0.0, 0.0);
    for fold in 0..plan.k {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = learners::fit(
            params,
            &x.select_rows(&train),
            &ty,
            derive_seed(seed, Stream::Learner, fold as u64),
        )?;
        let pred = model.predict(&x.select_rows(&test))?;
        let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let m = compute_metrics(&truth, &pred, MetricUnit::LogSpace).expect("non-empty fold");
        mae += m.mae;
        rmse += m.rmse;
    }
    let k = plan.k as f64;
    Ok((mae / k, rmse / k))
}

pub fn grid_search(
    kind: ModelKind,
    grid: &Grid,
    x: &Matrix,
    y: &[f64],
    plan: &FoldPlan,
    seed: u64,
) -> Result<GridResult, EvalError> {
    let cells = grid.cells()?;
    if cells.is_empty() {
        return Err(EvalError::EmptyGrid(kind));
    }
    let results: Vec<CellResult> = cells
        .into_par_iter()
        .map(|cell| {
            let scored = HyperParams::from_map(kind, &cell).and_then(|p| cv_score(&p, x, y, plan, seed));
            match scored {
                Ok((mae, rmse)) => CellResult {
                    params: cell,
                    cv_mae: Some(mae),
                    cv_rmse: Some(rmse),
                    error: None,
                },
                Err(e) => CellResult {
                    params: cell,
                    cv_mae: None,
                    cv_rmse: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best_index = select_best(&results).ok_or_else(|| EvalError::AllCellsFailed {
        kind,
        last: results
            .iter()
            .rev()
            .find_map(|c| c.error.clone())
            .unwrap_or_default(),
    })?;
    Ok(GridResult {
        kind,
        best_index,
        best_params: results[best_index].params.clone(),
        cells: results,
    })
}

/// Lowest MAE, then lowest RMSE, then earliest.
pub fn select_best(cells: &[CellResult]) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        let (Some(mae), Some(rmse)) = (c.cv_mae, c.cv_rmse) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((_, bm, br)) => mae < bm || (mae == bm && rmse < br),
        };
        if better {
            best = Some((i, mae, rmse));
        }
    }
    best.map(|(i, _, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::kfold_split;

    fn cell(mae: f64, rmse: f64) -> CellResult {
        CellResult {
            params: ParamMap::new(),
            cv_mae: Some(mae),
            cv_rmse: Some(rmse),
            error: None,
        }
    }

    #[test]
    fn cartesian_order() {
        let g = Grid(object(json!({"a": [1, 2], "b": ["x", "y", "z"]})));
        let cells = g.cells().unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], object(json!({"a": 1, "b": "x"})));
        assert_eq!(cells[1], object(json!({"a": 1, "b": "y"})));
        assert_eq!(cells[5], object(json!({"a": 2, "b": "z"})));
    }

    #[test]
    fn tie_rules() {
        assert_eq!(select_best(&[cell(1.0, 0.5), cell(1.0, 0.6)]), Some(0));
        assert_eq!(select_best(&[cell(1.0, 0.6), cell(1.0, 0.5)]), Some(1));
        assert_eq!(select_best(&[cell(1.0, 0.5), cell(1.0, 0.5)]), Some(0));
        assert_eq!(select_best(&[cell(2.0, 0.1), cell(1.0, 9.0)]), Some(1));
        let failed = CellResult {
            error: Some("x".into()),
            cv_mae: None,
            cv_rmse: None,
            params: ParamMap::new(),
        };
        assert_eq!(select_best(&[failed.clone(), cell(3.0, 3.0)]), Some(1));
        assert_eq!(select_best(&[failed]), None);
    }

    #[test]
    fn defaults_contain_reference_points() {
        let grids = default_grids();
        assert_eq!(grids.len(), 9);
        for (kind, point) in reference_best_points() {
            assert!(grids[&kind].contains(kind, &point), "{kind}");
        }
    }

    #[test]
    fn singleton_grid_wins_and_failures_are_recorded() {
        let x = Matrix::from_rows(&(0..10).map(|i| [f64::from(i)]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let plan = kfold_split(10, 5, 0).unwrap();
        let g = Grid(object(json!({"alpha": [1.0]})));
        let r = grid_search(ModelKind::Ridge, &g, &x, &y, &plan, 0).unwrap();
        assert_eq!(r.best_index, 0);
        // k larger than any training fold fails; the other cell still wins.
        let g = Grid(object(json!({"n_neighbors": [50, 2]})));
        let r = grid_search(ModelKind::Knn, &g, &x, &y, &plan, 0).unwrap();
        assert!(r.cells[0].error.is_some());
        assert_eq!(r.best_index, 1);
    }
}
