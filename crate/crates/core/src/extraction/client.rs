//! Text-generation service clients.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::service::{JsonEndpoint, ServiceError};

/// Wire body of a text-generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGenReply {
    pub text: String,
}

pub trait TextGenClient: Send + Sync {
    fn complete(&self, request: &TextGenRequest) -> Result<String, ServiceError>;
}

/// `POST <url>` with a JSON [`TextGenRequest`], expecting `{"text": ...}`.
#[derive(Debug, Clone)]
pub struct HttpTextGen {
    endpoint: JsonEndpoint,
}

impl HttpTextGen {
    pub fn new(url: &str, auth_header: &str) -> Result<Self, ServiceError> {
        Ok(Self {
            endpoint: JsonEndpoint::new(url, auth_header, Duration::from_secs(120))?,
        })
    }
}

impl TextGenClient for HttpTextGen {
    fn complete(&self, request: &TextGenRequest) -> Result<String, ServiceError> {
        let reply: TextGenReply = self.endpoint.post(request)?;
        Ok(reply.text)
    }
}

/// Offline stand-in for a language model.
///
/// The product name is recovered from the last `'…'` quoted span of the
/// prompt (the bundled template quotes it), falling back to the last
/// non-empty line. Canned replies take precedence; names listed in
/// `failing` always produce a transport error.
#[derive(Debug, Clone, Default)]
pub struct MockTextGen {
    canned: HashMap<String, String>,
    failing: HashSet<String>,
}

impl MockTextGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reply(mut self, product_name: impl Into<String>, reply: impl Into<String>) -> Self {
        self.canned.insert(product_name.into(), reply.into());
        self
    }

    pub fn failing_on(mut self, product_name: impl Into<String>) -> Self {
        self.failing.insert(product_name.into());
        self
    }

    fn product_name(prompt: &str) -> &str {
        if let Some(end) = prompt.rfind("':") {
            if let Some(start) = prompt[..end].rfind('\'') {
                return &prompt[start + 1..end];
            }
        }
        prompt
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .trim()
    }

    /// Builds `"<subject> with <keywords> in <setting>"` from the words of a
    /// product name.
    pub fn synthesize(name: &str) -> String {
        let words: Vec<String> = name
            .split([',', '-', '(', ':'])
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|w| w.chars().filter(|c| c.is_ascii_alphabetic()).collect::<String>())
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase())
            .collect();
        let (subject, keywords) = match words.len() {
            0 => ("product".to_string(), "simple styling".to_string()),
            1 => (words[0].clone(), "simple styling".to_string()),
            n => {
                let split = n.saturating_sub(2).max(1);
                (words[split..].join(" "), words[..split].join(" "))
            }
        };
        format!("{subject} with {keywords} in a bright modern home")
    }
}

impl TextGenClient for MockTextGen {
    fn complete(&self, request: &TextGenRequest) -> Result<String, ServiceError> {
        // Registered names may themselves contain quotes, so look for them
        // verbatim before falling back to the quoted-span heuristic.
        let registered = self
            .canned
            .keys()
            .chain(&self.failing)
            .filter(|k| request.prompt.contains(&format!("'{k}':")))
            .max_by_key(|k| k.len());
        let name = registered.map_or_else(|| Self::product_name(&request.prompt), String::as_str);
        if self.failing.contains(name) {
            return Err(ServiceError::Transport(format!("injected failure for `{name}`")));
        }
        if let Some(reply) = self.canned.get(name) {
            return Ok(reply.clone());
        }
        Ok(Self::synthesize(name))
    }
}
