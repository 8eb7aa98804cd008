//! Thin async client for the fcbm inference service.

use serde::de::DeserializeOwned;

use fcbm_core::data::Split;
use fcbm_core::evaluation::{FaithfulnessReport, PlotDoc};
use fcbm_core::wire::{ErrorBody, Meta, PredictRequest, PredictResponse, SampleDetail, SamplePage};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server returned {status} ({code}): {message}")]
    Api { status: u16, code: String, message: String },
    #[error("unexpected response body: {0}")]
    Decode(#[from] serde_json::Error),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type ClientResult<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8787`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    async fn text(&self, req: reqwest::RequestBuilder) -> ClientResult<String> {
        let resp = req.send().await?;
        let status = resp.status();
        let body = resp.text().await?;
        if status.is_success() {
            return Ok(body);
        }
        match serde_json::from_str::<ErrorBody>(&body) {
            Ok(e) => Err(ClientError::Api {
                status: status.as_u16(),
                code: e.error.code,
                message: e.error.message,
            }),
            Err(_) => Err(ClientError::Api {
                status: status.as_u16(),
                code: "unknown".into(),
                message: body,
            }),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> ClientResult<T> {
        let body = self.get_raw(path, query).await?;
        Ok(serde_json::from_str(&body)?)
    }

    /// Body of any GET endpoint, unparsed.
    pub async fn get_raw(&self, path: &str, query: &[(&str, String)]) -> ClientResult<String> {
        self.text(self.http.get(format!("{}{path}", self.base)).query(query)).await
    }

    /// POST an arbitrary JSON body; returns the response body unparsed.
    pub async fn post_raw(&self, path: &str, body: impl Into<String>) -> ClientResult<String> {
        let req = self
            .http
            .post(format!("{}{path}", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.into());
        self.text(req).await
    }

    pub async fn meta(&self) -> ClientResult<Meta> {
        self.get("/api/meta", &[]).await
    }

    pub async fn samples(&self, split: Option<Split>, offset: usize, limit: usize) -> ClientResult<SamplePage> {
        let mut q = vec![("offset", offset.to_string()), ("limit", limit.to_string())];
        if let Some(s) = split {
            q.push(("split", s.to_string()));
        }
        self.get("/api/samples", &q).await
    }

    pub async fn sample(&self, id: &str) -> ClientResult<SampleDetail> {
        let url = reqwest::Url::parse(&format!("{}/api/sample/", self.base))
            .and_then(|u| u.join(&encode_segment(id)))
            .map_err(|e| ClientError::Api {
                status: 0,
                code: "bad_url".into(),
                message: e.to_string(),
            })?;
        let body = self.text(self.http.get(url)).await?;
        Ok(serde_json::from_str(&body)?)
    }

    pub async fn predict(&self, concepts: &[f64]) -> ClientResult<PredictResponse> {
        let req = PredictRequest {
            concepts: concepts.to_vec(),
        };
        let body = self
            .text(self.http.post(format!("{}/api/predict", self.base)).json(&req))
            .await?;
        Ok(serde_json::from_str(&body)?)
    }

    pub async fn response_curves(&self, output: usize) -> ClientResult<PlotDoc> {
        self.get("/api/response_curves", &[("output", output.to_string())]).await
    }

    /// The report exactly as served.
    pub async fn metrics_raw(&self) -> ClientResult<String> {
        self.get_raw("/api/metrics", &[]).await
    }

    pub async fn metrics(&self) -> ClientResult<FaithfulnessReport> {
        Ok(serde_json::from_str(&self.metrics_raw().await?)?)
    }
}

/// Percent-encodes everything outside the unreserved URL set.
fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_escaped() {
        assert_eq!(encode_segment("s00012"), "s00012");
        assert_eq!(encode_segment("a/b c"), "a%2Fb%20c");
    }

    #[test]
    fn trailing_slash_dropped() {
        assert_eq!(Client::new("http://h:1/").base, "http://h:1");
    }
}
