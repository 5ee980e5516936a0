//! LLM attribute extraction: render the prompt for a product, call the
//! text-generation service, and reduce the reply to one prompt sentence.

pub mod client;
pub mod parse;
pub mod sanitize;
pub mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Product;
use crate::ledger::{JsonlLedger, LedgerError};
use crate::retry::RetryPolicy;
use crate::service::ServiceError;

pub use client::{HttpTextGen, MockTextGen, TextGenClient, TextGenRequest};
pub use parse::{parse_tuple, AttributeTuple};
pub use sanitize::{sanitize_output, SanitizeMode, Sanitized, Violation};
pub use template::{render_llm_prompt, PromptTemplate, Wrapper};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("text generation failed for product {product_id}: {source}")]
    Service {
        product_id: String,
        #[source]
        source: ServiceError,
    },
    #[error("reply for product {product_id} is empty after sanitation")]
    EmptyOutput { product_id: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl ExtractionError {
    pub fn product_id(&self) -> Option<&str> {
        match self {
            Self::Service { product_id, .. } | Self::EmptyOutput { product_id } => Some(product_id),
            Self::Ledger(_) => None,
        }
    }
}

/// Decoding parameters forwarded to the text-generation service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextGenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for TextGenParams {
    fn default() -> Self {
        Self {
            max_tokens: 80,
            temperature: 0.2,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub product_id: String,
    pub raw_output: String,
    pub sanitized_output: String,
    pub parsed: Option<AttributeTuple>,
    pub violations: Vec<Violation>,
}

pub fn extract_attributes(
    product: &Product,
    template: &PromptTemplate,
    client: &dyn TextGenClient,
    mode: SanitizeMode,
    params: &TextGenParams,
    retry: &RetryPolicy,
) -> Result<ExtractionResult, ExtractionError> {
    let request = TextGenRequest {
        prompt: render_llm_prompt(product, template),
        max_tokens: params.max_tokens,
        temperature: params.temperature,
        seed: params.seed,
    };
    let raw_output = retry
        .run(|_| client.complete(&request))
        .map_err(|source| ExtractionError::Service {
            product_id: product.product_id.clone(),
            source,
        })?;
    let Sanitized { text, violations } =
        sanitize_output(&raw_output, mode).map_err(|_| ExtractionError::EmptyOutput {
            product_id: product.product_id.clone(),
        })?;
    Ok(ExtractionResult {
        product_id: product.product_id.clone(),
        parsed: parse_tuple(&text),
        raw_output,
        sanitized_output: text,
        violations,
    })
}

/// Extraction bound to a client and an extraction ledger.
pub struct Extractor<'a> {
    pub template: &'a PromptTemplate,
    pub client: &'a dyn TextGenClient,
    pub mode: SanitizeMode,
    pub params: TextGenParams,
    pub retry: RetryPolicy,
    pub ledger: Option<&'a JsonlLedger<ExtractionResult>>,
}

impl Extractor<'_> {
    /// Extracts without touching the ledger.
    pub fn extract(&self, product: &Product) -> Result<ExtractionResult, ExtractionError> {
        extract_attributes(product, self.template, self.client, self.mode, &self.params, &self.retry)
    }

    pub fn extract_and_record(&self, product: &Product) -> Result<ExtractionResult, ExtractionError> {
        let result = self.extract(product)?;
        self.record(&result)?;
        Ok(result)
    }

    pub fn record(&self, result: &ExtractionResult) -> Result<(), ExtractionError> {
        if let Some(ledger) = self.ledger {
            ledger.append(result)?;
        }
        Ok(())
    }
}
