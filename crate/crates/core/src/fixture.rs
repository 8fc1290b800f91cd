//! A small seeded corpus and bundle for tests, golden files and demos.
//!
//! Every learner gets a one-cell grid with cheap settings, so the whole
//! bundle trains in a few seconds.

use serde_json::{json, Value};

use crate::bundle::ModelBundle;
use crate::data::{to_csv, Dataset};
use crate::eval::report::fingerprint;
use crate::eval::{Grid, Grids};
use crate::learners::ModelKind;
use crate::synth::{synthesize_dataset, GeneratorConfig};
use crate::training::{train, TrainConfig, TrainError, TrainOutput};

pub const FIXTURE_SEED: u64 = 7;
pub const FIXTURE_PER_DESIGN: usize = 40;
pub const FIXTURE_TIMESTAMP: &str = "2000-01-01T00:00:00Z";

pub fn fixture_dataset() -> Dataset {
    let cfg = GeneratorConfig::calibrated(FIXTURE_PER_DESIGN, 0.8, 0.1, FIXTURE_SEED);
    synthesize_dataset(&cfg).expect("fixture generator config is valid")
}

fn one_cell(v: Value) -> Grid {
    let Value::Object(m) = v else { unreachable!("literal objects") };
    Grid(m.into_iter().map(|(k, v)| (k, Value::Array(vec![v]))).collect())
}

pub fn fixture_grids() -> Grids {
    use ModelKind::*;
    let mut g = Grids::new();
    g.insert(Knn, one_cell(json!({"n_neighbors": 5, "p": 2, "weights": "distance"})));
    g.insert(
        GradientBoosting,
        one_cell(json!({"n_estimators": 40, "learning_rate": 0.1, "max_depth": 3, "subsample": 0.8})),
    );
    g.insert(
        RandomForest,
        one_cell(json!({"n_estimators": 30, "max_features": "sqrt", "min_samples_leaf": 2})),
    );
    g.insert(
        RegularizedBoosting,
        one_cell(json!({"n_estimators": 40, "learning_rate": 0.1, "max_depth": 3, "reg_lambda": 1.0})),
    );
    g.insert(DecisionTree, one_cell(json!({"max_depth": 4, "min_samples_leaf": 3})));
    g.insert(Svr, one_cell(json!({"kernel": "rbf", "C": 1.0, "gamma": "scale"})));
    g.insert(
        Mlp,
        one_cell(json!({"hidden_layer_sizes": [8], "activation": "relu", "solver": "adam",
                        "max_iter": 200, "learning_rate_init": 0.01})),
    );
    g.insert(AdaboostR2, one_cell(json!({"n_estimators": 20, "max_depth": 3})));
    g.insert(Ridge, one_cell(json!({"alpha": 1.0})));
    g
}

pub fn fixture_config() -> TrainConfig {
    TrainConfig {
        seed: FIXTURE_SEED,
        folds: 3,
        grids: fixture_grids(),
        permutation_repeats: 2,
        ..TrainConfig::default()
    }
}

pub fn fixture_training() -> Result<TrainOutput, TrainError> {
    let ds = fixture_dataset();
    let fp = fingerprint(to_csv(&ds).as_bytes());
    train(&ds, &fp, &fixture_config(), FIXTURE_TIMESTAMP)
}

pub fn fixture_bundle() -> ModelBundle {
    fixture_training().expect("fixture training succeeds").bundle
}

/// The all-15 phenomenology request.
pub fn fixture_request() -> Value {
    let scores: serde_json::Map<String, Value> = crate::data::Metric::ALL
        .iter()
        .map(|m| (m.key().to_string(), json!(15)))
        .collect();
    json!({"design": "phenomenology", "scores": scores, "alpha": 0.1})
}
