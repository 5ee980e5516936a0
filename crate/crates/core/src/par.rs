//! Prompt Adherence Recall: the flat mean of 0/1 object presence over all
//! (prompt, object) pairs, with detection delegated to an external service.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extraction::ExtractionResult;
use crate::imagegen::{GenerationRecord, ImageStore, StoreError};
use crate::pool::map_bounded;
use crate::prompt::{ImagePrompt, Strategy};
use crate::retry::RetryPolicy;
use crate::service::{JsonEndpoint, ServiceError};

pub const DEFAULT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ParError {
    #[error("prompt {0} yields no object label")]
    EmptyLabel(String),
    #[error("PAR of an empty batch is undefined")]
    EmptyBatch,
    #[error("prompt {0} has no labels")]
    NoLabels(String),
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("detector failed on {prompt_id}: {source}")]
    Detector {
        prompt_id: String,
        #[source]
        source: ServiceError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptObjects {
    pub prompt_id: String,
    pub labels: Vec<String>,
}

impl PromptObjects {
    /// Lowercases and deduplicates (keeping first occurrence order).
    pub fn new(prompt_id: impl Into<String>, labels: impl IntoIterator<Item = impl AsRef<str>>) -> Result<Self, ParError> {
        let prompt_id = prompt_id.into();
        let mut seen = BTreeSet::new();
        let labels: Vec<String> = labels
            .into_iter()
            .map(|l| l.as_ref().trim().to_lowercase())
            .filter(|l| !l.is_empty() && seen.insert(l.clone()))
            .collect();
        if labels.is_empty() {
            return Err(ParError::NoLabels(prompt_id));
        }
        Ok(Self { prompt_id, labels })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
}

impl Detection {
    pub fn new(label: impl Into<String>, confidence: f64) -> Result<Self, ParError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ParError::Confidence(confidence));
        }
        Ok(Self {
            label: label.into(),
            confidence,
        })
    }
}

pub fn prompt_id(product_id: &str, strategy: Strategy) -> String {
    format!("{product_id}/{strategy}")
}

fn head_noun(text: &str) -> Option<String> {
    text.split_whitespace()
        .rev()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .find(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Head-noun heuristic: the last token of the parsed subject when the
/// extraction parsed, else the last token of the prompt text.
pub fn extract_objects(prompt: &ImagePrompt, extraction: Option<&ExtractionResult>) -> Result<PromptObjects, ParError> {
    let id = prompt_id(&prompt.product_id, prompt.strategy);
    let label = match extraction.and_then(|e| e.parsed.as_ref()) {
        Some(tuple) => head_noun(&tuple.subject),
        None => head_noun(&prompt.text),
    }
    .ok_or_else(|| ParError::EmptyLabel(id.clone()))?;
    PromptObjects::new(id, [label])
}

/// 0/1 per label: present iff some detection with the same label
/// (case-insensitive) has confidence at least `threshold`.
pub fn presence(objects: &PromptObjects, detections: &[Detection], threshold: f64) -> Result<Vec<u8>, ParError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ParError::Threshold(threshold));
    }
    Ok(objects
        .labels
        .iter()
        .map(|l| {
            u8::from(
                detections
                    .iter()
                    .any(|d| d.confidence >= threshold && d.label.trim().eq_ignore_ascii_case(l)),
            )
        })
        .collect())
}

/// Flat mean over all presence flags of all prompts.
pub fn par_score(presences: &[Vec<u8>]) -> Result<f64, ParError> {
    if presences.is_empty() {
        return Err(ParError::EmptyBatch);
    }
    let (mut hits, mut total) = (0u64, 0u64);
    for (i, p) in presences.iter().enumerate() {
        if p.is_empty() {
            return Err(ParError::NoLabels(i.to_string()));
        }
        hits += p.iter().map(|&v| u64::from(v)).sum::<u64>();
        total += p.len() as u64;
    }
    Ok(hits as f64 / total as f64)
}

/// Mean of per-prompt means; reported alongside the flat mean.
pub fn par_per_prompt_mean(presences: &[Vec<u8>]) -> Result<f64, ParError> {
    if presences.is_empty() {
        return Err(ParError::EmptyBatch);
    }
    let mut acc = 0.0;
    for (i, p) in presences.iter().enumerate() {
        if p.is_empty() {
            return Err(ParError::NoLabels(i.to_string()));
        }
        acc += p.iter().map(|&v| f64::from(v)).sum::<f64>() / p.len() as f64;
    }
    Ok(acc / presences.len() as f64)
}

/// Convenience over `(objects, detections)` pairs.
pub fn par_of_batch(batch: &[(PromptObjects, Vec<Detection>)], threshold: f64) -> Result<f64, ParError> {
    let presences = batch
        .iter()
        .map(|(o, d)| presence(o, d, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    par_score(&presences)
}

pub trait Detector: Send + Sync {
    fn detect(&self, png: &[u8]) -> Result<Vec<Detection>, ServiceError>;
}

#[derive(Debug, Serialize)]
struct DetectRequest<'a> {
    image_b64: &'a str,
}

#[derive(Debug, Deserialize)]
struct DetectReply {
    detections: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct HttpDetector {
    endpoint: JsonEndpoint,
}

impl HttpDetector {
    pub fn new(url: &str, auth_header: &str) -> Result<Self, ServiceError> {
        Ok(Self {
            endpoint: JsonEndpoint::new(url, auth_header, Duration::from_secs(120))?,
        })
    }
}

impl Detector for HttpDetector {
    fn detect(&self, png: &[u8]) -> Result<Vec<Detection>, ServiceError> {
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(png);
        let reply: DetectReply = self.endpoint.post(&DetectRequest { image_b64: &image_b64 })?;
        if let Some(d) = reply.detections.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
            return Err(ServiceError::MalformedReply(format!("confidence {} outside [0, 1]", d.confidence)));
        }
        Ok(reply.detections)
    }
}

/// Offline detector with a fixed vocabulary; confidences derive from the
/// image hash so the same image always gets the same detections.
#[derive(Debug, Clone)]
pub struct MockDetector {
    pub vocabulary: Vec<String>,
}

impl Default for MockDetector {
    fn default() -> Self {
        Self {
            vocabulary: ["rug", "bed", "beds", "cabinet", "controller", "plush", "dog", "chair", "sofa", "lamp"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl Detector for MockDetector {
    fn detect(&self, png: &[u8]) -> Result<Vec<Detection>, ServiceError> {
        let digest = Sha256::digest(png);
        Ok(self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, label)| Detection {
                label: label.clone(),
                confidence: f64::from(digest[i % digest.len()]) / 255.0,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPresence {
    pub prompt_id: String,
    pub strategy: Strategy,
    pub image_hash: String,
    pub labels: Vec<String>,
    pub presence: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyPar {
    pub par: f64,
    pub par_per_prompt_mean: f64,
    pub prompts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParReport {
    pub threshold: f64,
    pub par: f64,
    pub par_per_prompt_mean: f64,
    pub per_strategy: BTreeMap<Strategy, StrategyPar>,
    pub prompts: Vec<PromptPresence>,
}

/// Runs detection on every generated image (bounded concurrency) and
/// aggregates PAR overall and per strategy.
pub fn evaluate_par(
    records: &[GenerationRecord],
    extractions: &[ExtractionResult],
    store: &ImageStore,
    detector: &dyn Detector,
    threshold: f64,
    max_inflight: usize,
    retry: &RetryPolicy,
) -> Result<ParReport, ParError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ParError::Threshold(threshold));
    }
    let by_product: BTreeMap<&str, &ExtractionResult> =
        extractions.iter().map(|e| (e.product_id.as_str(), e)).collect();
    let results = map_bounded(records, max_inflight, |r| -> Result<PromptPresence, ParError> {
        let prompt = ImagePrompt {
            product_id: r.product_id.clone(),
            strategy: r.strategy,
            text: r.prompt_text.clone(),
            source: r.strategy.source(),
        };
        let extraction = match r.strategy {
            Strategy::Llm => by_product.get(r.product_id.as_str()).copied(),
            _ => None,
        };
        let objects = extract_objects(&prompt, extraction)?;
        let png = store.load(&r.image_hash)?;
        let detections = retry.run(|_| detector.detect(&png)).map_err(|source| ParError::Detector {
            prompt_id: objects.prompt_id.clone(),
            source,
        })?;
        Ok(PromptPresence {
            presence: presence(&objects, &detections, threshold)?,
            prompt_id: objects.prompt_id,
            strategy: r.strategy,
            image_hash: r.image_hash.clone(),
            labels: objects.labels,
        })
    });
    let prompts = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut per_strategy = BTreeMap::new();
    for s in Strategy::ALL {
        let p: Vec<Vec<u8>> = prompts.iter().filter(|p| p.strategy == s).map(|p| p.presence.clone()).collect();
        if !p.is_empty() {
            per_strategy.insert(
                s,
                StrategyPar {
                    par: par_score(&p)?,
                    par_per_prompt_mean: par_per_prompt_mean(&p)?,
                    prompts: p.len(),
                },
            );
        }
    }
    let all: Vec<Vec<u8>> = prompts.iter().map(|p| p.presence.clone()).collect();
    Ok(ParReport {
        threshold,
        par: par_score(&all)?,
        par_per_prompt_mean: par_per_prompt_mean(&all)?,
        per_strategy,
        prompts,
    })
}
