//! Errors and JSON-over-HTTP plumbing shared by the external service clients
//! (text generation, image generation, object detection).

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    /// Connection failures, timeouts and 5xx replies. Retryable.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend refused the request (4xx). Not retryable.
    #[error("backend rejected the request (HTTP {status}): {reason}")]
    Rejected { status: u16, reason: String },
    #[error("malformed reply: {0}")]
    MalformedReply(String),
}

impl ServiceError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ServiceError::Transport(_))
    }
}

/// Parses an `auth_header` config value of the form `Name: value`.
/// Empty input means no header.
pub fn parse_auth_header(raw: &str) -> Option<(String, String)> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    match raw.split_once(':') {
        Some((name, value)) => Some((name.trim().to_string(), value.trim().to_string())),
        None => Some(("Authorization".to_string(), raw.to_string())),
    }
}

/// A single JSON POST endpoint.
#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    client: reqwest::blocking::Client,
    url: String,
    auth: Option<(String, String)>,
}

impl JsonEndpoint {
    pub fn new(url: impl Into<String>, auth_header: &str, timeout: Duration) -> Result<Self, ServiceError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ServiceError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            auth: parse_auth_header(auth_header),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post<Req, Resp>(&self, body: &Req) -> Result<Resp, ServiceError>
    where
        Req: Serialize + ?Sized,
        Resp: DeserializeOwned,
    {
        let mut request = self.client.post(&self.url).json(body);
        if let Some((name, value)) = &self.auth {
            request = request.header(name.as_str(), value.as_str());
        }
        let response = request
            .send()
            .map_err(|e| ServiceError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(ServiceError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let reason = response.text().unwrap_or_default();
            return Err(ServiceError::Rejected {
                status: status.as_u16(),
                reason,
            });
        }
        let bytes = response
            .bytes()
            .map_err(|e| ServiceError::Transport(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::MalformedReply(e.to_string()))
    }
}
