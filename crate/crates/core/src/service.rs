//! Request handling for the prediction API, independent of any transport.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bundle::ModelBundle;
use crate::conformal::snap;
use crate::data::{DesignType, Metric, ScoreSet, Scores};
use crate::learners::ModelKind;
use crate::stack::ensemble_average;

pub const DEFAULT_ALPHA: f64 = 0.1;

/// A request problem attributable to one input field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn at(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.into()),
            message: message.into(),
        }
    }

    /// `{"error": {"field": ..., "message": ...}}`
    pub fn to_json(&self) -> String {
        json!({"error": self}).to_string()
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{field}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRequest {
    pub design: DesignType,
    pub scores: Scores,
    pub alpha: f64,
}

/// Validates a request body of the form
/// `{"design": "...", "scores": {...}, "alpha": 0.1}`.
pub fn parse_request(body: &Value, allowed: &ScoreSet) -> Result<PredictionRequest, ApiError> {
    let obj = body.as_object().ok_or(ApiError {
        field: None,
        message: "request body must be a JSON object".into(),
    })?;
    if let Some(k) = obj.keys().find(|k| !["design", "scores", "alpha"].contains(&k.as_str())) {
        return Err(ApiError::at(k.clone(), "unknown field"));
    }
    let design = match obj.get("design") {
        None => return Err(ApiError::at("design", "missing")),
        Some(Value::String(s)) => s
            .parse::<DesignType>()
            .map_err(|_| ApiError::at("design", format!("unknown design '{s}'")))?,
        Some(_) => return Err(ApiError::at("design", "must be a string")),
    };
    let raw = match obj.get("scores") {
        None => return Err(ApiError::at("scores", "missing")),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ApiError::at("scores", "must be an object")),
    };
    let mut scores = Scores::uniform(0);
    for (key, v) in raw {
        let field = format!("scores.{key}");
        let metric = Metric::from_key(key).ok_or_else(|| ApiError::at(&field, "unknown metric"))?;
        let value = v
            .as_i64()
            .ok_or_else(|| ApiError::at(&field, format!("{v} is not an integer")))?;
        if !allowed.contains(value) {
            return Err(ApiError::at(
                &field,
                format!("score {value} is not in the allowed set {allowed}"),
            ));
        }
        scores[metric] = value as u32;
    }
    let missing: Vec<&str> = Metric::ALL
        .iter()
        .filter(|m| !raw.contains_key(m.key()))
        .map(|m| m.key())
        .collect();
    if !missing.is_empty() {
        return Err(ApiError::at("scores", format!("missing scores: {}", missing.join(", "))));
    }
    let alpha = match obj.get("alpha") {
        None | Some(Value::Null) => DEFAULT_ALPHA,
        Some(v) => match v.as_f64() {
            Some(a) if a > 0.0 && a < 1.0 => a,
            _ => return Err(ApiError::at("alpha", format!("{v} must be a number strictly between 0 and 1"))),
        },
    };
    Ok(PredictionRequest { design, scores, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalOut {
    pub lower: u64,
    /// `null` when the calibration set is too small for the requested alpha.
    pub upper: Option<u64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    /// Participants predicted by each learner, plus `stacking`.
    pub per_model: BTreeMap<String, f64>,
    pub ensemble_mean: f64,
    pub recommended_n: u64,
    pub interval: IntervalOut,
    pub importances: Map<String, Value>,
    pub model_version: String,
}

impl PredictionResponse {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// A loaded bundle with its version computed once.
#[derive(Debug, Clone)]
pub struct ServiceState {
    pub bundle: ModelBundle,
    pub model_version: String,
}

impl ServiceState {
    pub fn new(bundle: ModelBundle) -> Self {
        let model_version = bundle.model_version();
        Self { bundle, model_version }
    }

    pub fn parse(&self, body: &Value) -> Result<PredictionRequest, ApiError> {
        parse_request(body, &self.bundle.metadata.score_set)
    }

    pub fn predict(&self, req: &PredictionRequest) -> Result<PredictionResponse, ApiError> {
        let internal = |e: &dyn std::fmt::Display| ApiError {
            field: None,
            message: e.to_string(),
        };
        let bundle = &self.bundle;
        let row = bundle.pipeline.features(req.design, &req.scores);
        let mut nine = BTreeMap::new();
        for kind in ModelKind::COMPARED {
            let model = &bundle.models[&kind];
            nine.insert(kind, model.predict_row(&row).map_err(|e| internal(&e))?.exp());
        }
        let ensemble_mean = ensemble_average(&nine).map_err(|e| internal(&e))?;
        let mut per_model: BTreeMap<String, f64> =
            nine.iter().map(|(k, v)| (k.name().to_string(), *v)).collect();
        if let Some(stacked) = &bundle.stacked {
            per_model.insert(
                "stacking".into(),
                stacked.predict_row(&row).map_err(|e| internal(&e))?.exp(),
            );
        }
        let interval = bundle
            .conformal
            .predict_interval(ensemble_mean.ln(), req.alpha)
            .map_err(|e| ApiError::at("alpha", e.to_string()))?;
        Ok(PredictionResponse {
            per_model,
            ensemble_mean,
            recommended_n: (snap(ensemble_mean).ceil() as u64).max(1),
            interval: IntervalOut {
                lower: interval.lower,
                upper: interval.upper,
                alpha: req.alpha,
            },
            importances: bundle.importances.impurity_grouped.clone(),
            model_version: self.model_version.clone(),
        })
    }

    /// Parse, validate and predict in one step.
    pub fn handle_predict(&self, body: &Value) -> Result<PredictionResponse, ApiError> {
        self.predict(&self.parse(body)?)
    }

    pub fn handle_models(&self) -> Value {
        serde_json::to_value(&self.bundle.report).expect("report serializes")
    }

    pub fn handle_importance(&self) -> Value {
        json!({
            "impurity": self.bundle.importances.impurity,
            "permutation": self.bundle.importances.permutation,
        })
    }

    pub fn handle_health(&self) -> Value {
        json!({"status": "ok", "model_version": self.model_version})
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(scores: Value) -> Value {
        json!({"design": "phenomenology", "scores": scores})
    }

    fn all(v: u32) -> Value {
        Value::Object(Metric::ALL.iter().map(|m| (m.key().to_string(), json!(v))).collect())
    }

    #[test]
    fn valid_request_defaults_alpha() {
        let req = parse_request(&body(all(15)), &ScoreSet::default()).unwrap();
        assert_eq!(req.design, DesignType::Phenomenology);
        assert_eq!(req.scores, Scores::uniform(15));
        assert_eq!(req.alpha, DEFAULT_ALPHA);
    }

    #[test]
    fn out_of_set_score_names_the_field() {
        let mut s = all(15);
        s["information_power"] = json!(99);
        let e = parse_request(&body(s), &ScoreSet::default()).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("scores.information_power"));
        assert_eq!(
            e.to_json(),
            r#"{"error":{"field":"scores.information_power","message":"score 99 is not in the allowed set {10,15,20,25}"}}"#
        );
    }

    #[test]
    fn missing_scores_are_listed() {
        let mut s = all(20);
        s.as_object_mut().unwrap().remove("data_quality");
        s.as_object_mut().unwrap().remove("homogeneity");
        let e = parse_request(&body(s), &ScoreSet::default()).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("scores"));
        assert!(e.message.contains("homogeneity") && e.message.contains("data_quality"));
    }

    #[test]
    fn design_alpha_and_shape_errors() {
        let allowed = ScoreSet::default();
        let e = parse_request(&json!({"design": "oral_history", "scores": all(15)}), &allowed).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("design"));
        for alpha in [json!(0.0), json!(1.0), json!("x")] {
            let e = parse_request(&json!({"design": "narrative", "scores": all(15), "alpha": alpha}), &allowed)
                .unwrap_err();
            assert_eq!(e.field.as_deref(), Some("alpha"));
        }
        let e = parse_request(&json!([1]), &allowed).unwrap_err();
        assert_eq!(e.field, None);
        let e = parse_request(&json!({"design": "narrative", "scores": all(15), "extra": 1}), &allowed).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("extra"));
    }
}
