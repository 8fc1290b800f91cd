//! The persisted model bundle: one JSON document holding everything the
//! service needs to answer requests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conformal::ConformalCalibration;
use crate::data::ScoreSet;
use crate::eval::report::ComparisonReport;
use crate::eval::Grids;
use crate::learners::{ModelKind, RegressorModel};
use crate::preprocess::PreprocessPipeline;
use crate::stack::StackedModel;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error("cannot access bundle file: {0}")]
    Io(String),
    #[error("bundle file is truncated")]
    Truncated,
    #[error("bundle is not valid JSON (line {line}, column {column}): {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("bundle top level must be a JSON object")]
    NotAnObject,
    #[error("bundle format_version is {found}, this build reads {expected}")]
    VersionMismatch { found: String, expected: u64 },
    #[error("bundle has no '{0}' model")]
    MissingModel(String),
    #[error("bundle schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
}

/// Feature-importance tables, each keyed by feature name in feature order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceSet {
    /// Learner the importances were computed from.
    pub source: Option<ModelKind>,
    pub impurity: Map<String, Value>,
    pub permutation: Map<String, Value>,
    /// As above with the design one-hot columns summed into `design`.
    pub impurity_grouped: Map<String, Value>,
    pub permutation_grouped: Map<String, Value>,
}

pub fn importance_map(entries: impl IntoIterator<Item = (String, f64)>) -> Map<String, Value> {
    entries.into_iter().map(|(k, v)| (k, Value::from(v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub grids: Grids,
    pub score_set: ScoreSet,
    pub train_size: usize,
    pub test_size: usize,
    pub calibration_size: usize,
    /// Fully resolved training configuration.
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u64,
    pub pipeline: PreprocessPipeline,
    pub models: BTreeMap<ModelKind, RegressorModel>,
    pub stacked: Option<StackedModel>,
    pub conformal: ConformalCalibration,
    pub report: ComparisonReport,
    pub importances: ImportanceSet,
    pub metadata: TrainingMetadata,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl ModelBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    /// First 16 hex digits of the SHA-256 of the serialized bundle.
    pub fn model_version(&self) -> String {
        let digest = hex::encode(Sha256::digest(self.to_json().as_bytes()));
        digest[..16].to_string()
    }

    pub fn from_json(text: &str) -> Result<ModelBundle, BundleError> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            if e.is_eof() {
                BundleError::Truncated
            } else {
                BundleError::Syntax {
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                }
            }
        })?;
        let obj = value.as_object().ok_or(BundleError::NotAnObject)?;
        match obj.get("format_version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(BundleError::VersionMismatch {
                    found: v.to_string(),
                    expected: FORMAT_VERSION,
                })
            }
            None => {
                return Err(BundleError::VersionMismatch {
                    found: "missing".into(),
                    expected: FORMAT_VERSION,
                })
            }
        }
        let models = obj.get("models").and_then(Value::as_object);
        for kind in ModelKind::COMPARED {
            if !models.is_some_and(|m| m.contains_key(kind.name())) {
                return Err(BundleError::MissingModel(kind.name().into()));
            }
        }
        serde_path_to_error::deserialize(value).map_err(|e| BundleError::Schema {
            pointer: pointer(e.path()),
            message: e.inner().to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        std::fs::write(path, self.to_json()).map_err(|e| BundleError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<ModelBundle, BundleError> {
        let text = std::fs::read_to_string(path).map_err(|e| BundleError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
