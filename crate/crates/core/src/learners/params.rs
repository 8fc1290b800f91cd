//! Hyperparameters for each learner kind.
//!
//! Every kind has a typed parameter struct whose `Default` is the
//! reference best-parameter point. Grids and bundles carry parameters as
//! JSON objects (`ParamMap`); [`HyperParams::from_map`] overlays such a map on
//! the defaults and rejects unknown keys.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{LearnerError, ModelKind};

pub type ParamMap = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnParams {
    pub n_neighbors: usize,
    /// Minkowski exponent.
    pub p: f64,
    pub weights: KnnWeights,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            p: 1.0,
            weights: KnnWeights::Distance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitQuality {
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
}

impl MaxFeatures {
    /// Features examined per node, `None` meaning all of them.
    pub fn count(self, d: usize) -> Option<usize> {
        match self {
            MaxFeatures::All => None,
            MaxFeatures::Sqrt => Some(((d as f64).sqrt().floor() as usize).max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    pub criterion: SplitQuality,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: SplitQuality::SquaredError,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbParams {
    pub learning_rate: f64,
    pub loss: SplitQuality,
    pub max_depth: Option<usize>,
    pub n_estimators: usize,
    pub subsample: f64,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for GbParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            loss: SplitQuality::SquaredError,
            max_depth: Some(7),
            n_estimators: 200,
            subsample: 0.8,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbParams {
    pub colsample_bytree: f64,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub n_estimators: usize,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub subsample: f64,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for RbParams {
    fn default() -> Self {
        Self {
            colsample_bytree: 1.0,
            learning_rate: 0.1,
            max_depth: Some(7),
            n_estimators: 200,
            reg_alpha: 0.0,
            reg_lambda: 1.5,
            subsample: 0.8,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaLoss {
    Linear,
    Square,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaParams {
    pub learning_rate: f64,
    pub loss: AdaLoss,
    pub n_estimators: usize,
    /// Depth of each base tree.
    pub max_depth: usize,
}

impl Default for AdaParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            loss: AdaLoss::Square,
            n_estimators: 100,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeParams {
    pub alpha: f64,
    pub fit_intercept: bool,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self {
            alpha: 50.0,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoParams {
    pub alpha: f64,
    pub fit_intercept: bool,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            fit_intercept: true,
            max_iter: 100_000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Named(GammaRule),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `1 / (d * Var(X))`, variance over every matrix entry.
    Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrParams {
    #[serde(rename = "C")]
    pub c: f64,
    /// Polynomial degree; only the `poly` kernel reads it.
    pub degree: u32,
    pub gamma: Gamma,
    pub kernel: KernelKind,
    pub epsilon: f64,
    pub coef0: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            degree: 2,
            gamma: Gamma::Named(GammaRule::Scale),
            kernel: KernelKind::Rbf,
            epsilon: 0.1,
            coef0: 0.0,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateSchedule {
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Full-batch gradient descent with adaptive moments and early stopping.
    Adam,
    /// Limited-memory BFGS with backtracking line search; ignores early stopping.
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    pub activation: Activation,
    /// L2 penalty on weights (not biases).
    pub alpha: f64,
    pub early_stopping: bool,
    /// Exactly one hidden layer is supported.
    pub hidden_layer_sizes: Vec<usize>,
    pub learning_rate: LearningRateSchedule,
    pub solver: Solver,
    pub learning_rate_init: f64,
    pub max_iter: usize,
    pub validation_fraction: f64,
    pub n_iter_no_change: usize,
    pub tol: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            activation: Activation::Logistic,
            alpha: 0.01,
            early_stopping: true,
            hidden_layer_sizes: vec![30],
            learning_rate: LearningRateSchedule::Constant,
            solver: Solver::Adam,
            learning_rate_init: 0.01,
            max_iter: 1000,
            validation_fraction: 0.1,
            n_iter_no_change: 20,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperParams {
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    GradientBoosting(GbParams),
    RegularizedBoosting(RbParams),
    AdaboostR2(AdaParams),
    Ridge(RidgeParams),
    Lasso(LassoParams),
    Svr(SvrParams),
    Mlp(MlpParams),
}

fn overlay<T: Serialize + DeserializeOwned + Default>(map: &ParamMap) -> Result<T, LearnerError> {
    let mut base = match serde_json::to_value(T::default()).expect("params serialize") {
        Value::Object(m) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    };
    for (k, v) in map {
        if !base.contains_key(k) {
            return Err(LearnerError::InvalidParam {
                name: k.clone(),
                message: "unknown parameter".into(),
            });
        }
        base.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| LearnerError::InvalidParam {
        name: map.keys().cloned().collect::<Vec<_>>().join(","),
        message: e.to_string(),
    })
}

fn to_map<T: Serialize>(p: &T) -> ParamMap {
    match serde_json::to_value(p).expect("params serialize") {
        Value::Object(m) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    }
}

impl HyperParams {
    pub fn defaults(kind: ModelKind) -> HyperParams {
        Self::from_map(kind, &ParamMap::new()).expect("defaults are valid")
    }

    pub fn from_map(kind: ModelKind, map: &ParamMap) -> Result<HyperParams, LearnerError> {
        let p = match kind {
            ModelKind::Knn => HyperParams::Knn(overlay(map)?),
            ModelKind::DecisionTree => HyperParams::DecisionTree(overlay(map)?),
            ModelKind::RandomForest => HyperParams::RandomForest(overlay(map)?),
            ModelKind::GradientBoosting => HyperParams::GradientBoosting(overlay(map)?),
            ModelKind::RegularizedBoosting => HyperParams::RegularizedBoosting(overlay(map)?),
            ModelKind::AdaboostR2 => HyperParams::AdaboostR2(overlay(map)?),
            ModelKind::Ridge => HyperParams::Ridge(overlay(map)?),
            ModelKind::Lasso => HyperParams::Lasso(overlay(map)?),
            ModelKind::Svr => HyperParams::Svr(overlay(map)?),
            ModelKind::Mlp => HyperParams::Mlp(overlay(map)?),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            HyperParams::Knn(_) => ModelKind::Knn,
            HyperParams::DecisionTree(_) => ModelKind::DecisionTree,
            HyperParams::RandomForest(_) => ModelKind::RandomForest,
            HyperParams::GradientBoosting(_) => ModelKind::GradientBoosting,
            HyperParams::RegularizedBoosting(_) => ModelKind::RegularizedBoosting,
            HyperParams::AdaboostR2(_) => ModelKind::AdaboostR2,
            HyperParams::Ridge(_) => ModelKind::Ridge,
            HyperParams::Lasso(_) => ModelKind::Lasso,
            HyperParams::Svr(_) => ModelKind::Svr,
            HyperParams::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn to_map(&self) -> ParamMap {
        match self {
            HyperParams::Knn(p) => to_map(p),
            HyperParams::DecisionTree(p) => to_map(p),
            HyperParams::RandomForest(p) => to_map(p),
            HyperParams::GradientBoosting(p) => to_map(p),
            HyperParams::RegularizedBoosting(p) => to_map(p),
            HyperParams::AdaboostR2(p) => to_map(p),
            HyperParams::Ridge(p) => to_map(p),
            HyperParams::Lasso(p) => to_map(p),
            HyperParams::Svr(p) => to_map(p),
            HyperParams::Mlp(p) => to_map(p),
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        fn check(ok: bool, name: &str, message: &str) -> Result<(), LearnerError> {
            if ok {
                Ok(())
            } else {
                Err(LearnerError::InvalidParam {
                    name: name.into(),
                    message: message.into(),
                })
            }
        }
        fn tree_sizes(leaf: usize, split: usize) -> Result<(), LearnerError> {
            check(leaf >= 1, "min_samples_leaf", "must be at least 1")?;
            check(split >= 2, "min_samples_split", "must be at least 2")
        }
        match self {
            HyperParams::Knn(p) => {
                check(p.n_neighbors >= 1, "n_neighbors", "must be at least 1")?;
                check(p.p >= 1.0 && p.p.is_finite(), "p", "must be a finite value >= 1")
            }
            HyperParams::DecisionTree(p) => tree_sizes(p.min_samples_leaf, p.min_samples_split),
            HyperParams::RandomForest(p) => {
                check(p.n_estimators >= 1, "n_estimators", "must be at least 1")?;
                tree_sizes(p.min_samples_leaf, p.min_samples_split)
            }
            HyperParams::GradientBoosting(p) => {
                check(
                    p.learning_rate > 0.0 && p.learning_rate <= 1.0,
                    "learning_rate",
                    "must lie in (0, 1]",
                )?;
                check(p.subsample > 0.0 && p.subsample <= 1.0, "subsample", "must lie in (0, 1]")?;
                tree_sizes(p.min_samples_leaf, p.min_samples_split)
            }
            HyperParams::RegularizedBoosting(p) => {
                check(
                    p.learning_rate > 0.0 && p.learning_rate <= 1.0,
                    "learning_rate",
                    "must lie in (0, 1]",
                )?;
                check(p.subsample > 0.0 && p.subsample <= 1.0, "subsample", "must lie in (0, 1]")?;
                check(
                    p.colsample_bytree > 0.0 && p.colsample_bytree <= 1.0,
                    "colsample_bytree",
                    "must lie in (0, 1]",
                )?;
                check(p.reg_lambda >= 0.0, "reg_lambda", "must be non-negative")?;
                check(p.reg_alpha >= 0.0, "reg_alpha", "must be non-negative")?;
                tree_sizes(p.min_samples_leaf, p.min_samples_split)
            }
            HyperParams::AdaboostR2(p) => {
                check(p.n_estimators >= 1, "n_estimators", "must be at least 1")?;
                check(p.learning_rate > 0.0, "learning_rate", "must be positive")?;
                check(p.max_depth >= 1, "max_depth", "must be at least 1")
            }
            HyperParams::Ridge(p) => check(p.alpha >= 0.0, "alpha", "must be non-negative"),
            HyperParams::Lasso(p) => {
                check(p.alpha > 0.0, "alpha", "must be positive")?;
                check(p.max_iter >= 1, "max_iter", "must be at least 1")
            }
            HyperParams::Svr(p) => {
                check(p.c > 0.0, "C", "must be positive")?;
                check(p.epsilon >= 0.0, "epsilon", "must be non-negative")?;
                check(p.tol > 0.0, "tol", "must be positive")?;
                if let Gamma::Value(g) = p.gamma {
                    check(g > 0.0, "gamma", "must be positive")?;
                }
                Ok(())
            }
            HyperParams::Mlp(p) => {
                check(
                    p.hidden_layer_sizes.len() == 1 && p.hidden_layer_sizes[0] >= 1,
                    "hidden_layer_sizes",
                    "exactly one hidden layer with at least one unit is supported",
                )?;
                check(p.alpha >= 0.0, "alpha", "must be non-negative")?;
                check(p.learning_rate_init > 0.0, "learning_rate_init", "must be positive")?;
                check(p.max_iter >= 1, "max_iter", "must be at least 1")?;
                check(
                    p.validation_fraction > 0.0 && p.validation_fraction < 1.0,
                    "validation_fraction",
                    "must lie in (0, 1)",
                )
            }
        }
    }
}
