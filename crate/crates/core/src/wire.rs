//! JSON bodies of the inference service, shared by server and client.

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::model::HeadKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub concept_names: Vec<String>,
    pub label_names: Vec<String>,
    pub k: usize,
    pub n_labels: usize,
    pub head_kind: HeadKind,
    pub config_fingerprint: String,
    /// Split the metrics were computed on.
    pub split: Split,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub id: String,
    pub y: usize,
    pub predicted: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePage {
    pub split: Split,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub items: Vec<SampleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDetail {
    pub id: String,
    pub split: Split,
    pub c_hat: Vec<f64>,
    pub c: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub y: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub concepts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    /// `contributions[i][o]`: the part of logit `o` due to concept `i`.
    pub contributions: Vec<Vec<f64>>,
    /// Per-class offsets not attributable to any concept (linear head only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}
