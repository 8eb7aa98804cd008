//! Read-only HTTP service over one checkpoint and its dataset.
//!
//! All predictions are computed once at startup through the same forward
//! pass the evaluation pipeline uses; requests only read that state. The
//! one computing endpoint, `POST /api/predict`, applies the checkpoint's head
//! to a caller-supplied concept vector, which is how interventions are made.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::cors::{Any, CorsLayer};

use fcbm_core::data::{Dataset, Split};
use fcbm_core::evaluation::{evaluate, report_json, EvalConfig, PlotDoc, Series, EXPORT_VERSION};
use fcbm_core::model::{argmax_rows, softmax, CbmModel, Head};
use fcbm_core::numerics::Matrix;
use fcbm_core::wire::{
    ErrorBody, ErrorDetail, Meta, PredictRequest, PredictResponse, SampleDetail, SamplePage, SampleSummary,
};
use fcbm_core::{Error, Result, TOOL_VERSION};

pub const DEFAULT_PORT: u16 = 8787;
pub const CURVE_POINTS: usize = 101;
const DEFAULT_PAGE: usize = 50;

struct Entry {
    split: Split,
    y: usize,
    c: Vec<f64>,
    c_hat: Vec<f64>,
    logits: Vec<f64>,
    predicted: usize,
}

/// Everything the endpoints read. Built once, never mutated.
pub struct AppState {
    model: CbmModel,
    meta: Meta,
    entries: HashMap<String, Entry>,
    /// Ids per split, sorted.
    ids: HashMap<Split, Vec<String>>,
    metrics_json: String,
    /// One document per output class; `None` for a linear head.
    curves: Option<Vec<PlotDoc>>,
}

impl AppState {
    /// Precomputes predictions for every sample, the report for `split`, and
    /// the response curves.
    pub fn new(model: CbmModel, dataset: &Dataset, split: Split, eval: &EvalConfig) -> Result<Self> {
        let report = evaluate(&model, dataset, split, eval)?;
        let mut entries = HashMap::new();
        let mut ids = HashMap::new();
        for s in Split::ALL {
            let data = dataset.split(s);
            let mut split_ids = data.ids.clone();
            split_ids.sort();
            ids.insert(s, split_ids);
            if data.is_empty() {
                continue;
            }
            let pred = model.forward(&data.z)?;
            let predicted = argmax_rows(&pred.logits);
            for (r, id) in data.ids.iter().enumerate() {
                entries.insert(
                    id.clone(),
                    Entry {
                        split: s,
                        y: data.y[r],
                        c: data.c.row(r).to_vec(),
                        c_hat: pred.concepts.row(r).to_vec(),
                        logits: pred.logits.row(r).to_vec(),
                        predicted: predicted[r],
                    },
                );
            }
        }
        let curves = match &model.head {
            Head::Kan(kan) => Some(
                (0..model.n_labels())
                    .map(|o| {
                        let series = (0..model.k())
                            .map(|i| {
                                let pts = kan.response_curve(i, o, CURVE_POINTS)?;
                                Ok(Series {
                                    label: model.concept_names[i].clone(),
                                    x: pts.iter().map(|p| p.0).collect(),
                                    y: pts.iter().map(|p| p.1).collect(),
                                })
                            })
                            .collect::<Result<_>>()?;
                        Ok(PlotDoc {
                            version: EXPORT_VERSION,
                            title: format!("response curves for {}", model.label_names[o]),
                            x_label: "concept score".into(),
                            y_label: "logit contribution".into(),
                            series,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            Head::Linear(_) => None,
        };
        let meta = Meta {
            concept_names: model.concept_names.clone(),
            label_names: model.label_names.clone(),
            k: model.k(),
            n_labels: model.n_labels(),
            head_kind: model.head.kind(),
            config_fingerprint: model.config_fingerprint.clone(),
            split,
            tool_version: TOOL_VERSION.to_string(),
        };
        Ok(AppState {
            model,
            meta,
            entries,
            ids,
            metrics_json: report_json(&report),
            curves,
        })
    }

    /// Head output for an edited concept vector.
    pub fn predict(&self, concepts: &[f64]) -> Result<PredictResponse> {
        let k = self.model.k();
        if concepts.len() != k {
            return Err(Error::Shape(format!("expected {k} concept values, got {}", concepts.len())));
        }
        if let Some(i) = concepts.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("concept {i} is not finite")));
        }
        let x = Matrix::from_vec(1, k, concepts.to_vec())?;
        let logits = self.model.head.forward(&x)?.row(0).to_vec();
        let (contributions, bias) = match &self.model.head {
            Head::Kan(kan) => {
                let m = kan.contributions(concepts)?;
                ((0..k).map(|i| m.row(i).to_vec()).collect(), None)
            }
            Head::Linear(lin) => (
                concepts
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (0..lin.n_outputs()).map(|o| lin.weight[(o, i)] * v).collect())
                    .collect(),
                Some(lin.bias.clone()),
            ),
        };
        let probabilities = softmax(&logits);
        let predicted = argmax_rows(&Matrix::from_vec(1, logits.len(), logits.clone())?)[0];
        Ok(PredictResponse {
            logits,
            probabilities,
            predicted,
            contributions,
            bias,
        })
    }
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type Shared = Arc<AppState>;

async fn meta(State(s): State<Shared>) -> Json<Meta> {
    Json(s.meta.clone())
}

fn parse_usize(q: &HashMap<String, String>, key: &str, default: usize) -> std::result::Result<usize, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_query", format!("{key} must be a non-negative integer"))
        }),
    }
}

async fn samples(
    State(s): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> std::result::Result<Json<SamplePage>, ApiError> {
    let split = match q.get("split") {
        None => s.meta.split,
        Some(name) => name
            .parse::<Split>()
            .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_split", format!("unknown split {name:?}")))?,
    };
    let offset = parse_usize(&q, "offset", 0)?;
    let limit = parse_usize(&q, "limit", DEFAULT_PAGE)?;
    let ids = &s.ids[&split];
    let items = ids
        .iter()
        .skip(offset)
        .take(limit)
        .map(|id| {
            let e = &s.entries[id];
            SampleSummary {
                id: id.clone(),
                y: e.y,
                predicted: e.predicted,
                correct: e.y == e.predicted,
            }
        })
        .collect();
    Ok(Json(SamplePage {
        split,
        offset,
        limit,
        total: ids.len(),
        items,
    }))
}

async fn sample(State(s): State<Shared>, Path(id): Path<String>) -> std::result::Result<Json<SampleDetail>, ApiError> {
    let e = s
        .entries
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_sample", format!("no sample with id {id:?}")))?;
    Ok(Json(SampleDetail {
        id,
        split: e.split,
        c_hat: e.c_hat.clone(),
        c: e.c.clone(),
        probabilities: softmax(&e.logits),
        logits: e.logits.clone(),
        y: e.y,
        predicted: e.predicted,
    }))
}

async fn predict(
    State(s): State<Shared>,
    body: std::result::Result<Json<PredictRequest>, JsonRejection>,
) -> std::result::Result<Json<PredictResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_body", e.body_text()))?;
    s.predict(&req.concepts)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_concepts", e.to_string()))
}

async fn response_curves(
    State(s): State<Shared>,
    Query(q): Query<HashMap<String, String>>,
) -> std::result::Result<Json<PlotDoc>, ApiError> {
    let curves = s.curves.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "linear_head",
            "response curves exist only for KAN heads; a linear head's per-concept effect is its weight \
             matrix, returned as contributions by POST /api/predict",
        )
    })?;
    let raw = q
        .get("output")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_query", "missing output=<class index>"))?;
    let o: usize = raw
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_query", "output must be a class index"))?;
    curves.get(o).cloned().map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_output",
            format!("output {o} out of range ({} classes)", curves.len()),
        )
    })
}

async fn metrics(State(s): State<Shared>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], s.metrics_json.clone()).into_response()
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/samples", get(samples))
        .route("/api/sample/{id}", get(sample))
        .route("/api/predict", post(predict))
        .route("/api/response_curves", get(response_curves))
        .route("/api/metrics", get(metrics))
        .fallback(not_found)
        .layer(cors)
        .with_state(state)
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve_with_shutdown(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    serve_with_shutdown(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
