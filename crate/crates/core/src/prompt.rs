//! Final image prompts for the three prompting strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Product;
use crate::extraction::ExtractionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Sentence written by the language model.
    #[serde(rename = "LLM")]
    Llm,
    /// The raw product name.
    #[serde(rename = "PNAME")]
    Pname,
    /// The product-type label.
    #[serde(rename = "PTYPE")]
    Ptype,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Llm, Strategy::Pname, Strategy::Ptype];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Llm => "LLM",
            Strategy::Pname => "PNAME",
            Strategy::Ptype => "PTYPE",
        }
    }

    pub fn source(self) -> PromptSource {
        match self {
            Strategy::Llm => PromptSource::Extraction,
            Strategy::Pname => PromptSource::ProductName,
            Strategy::Ptype => PromptSource::ProductType,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy `{0}` (expected LLM, PNAME or PTYPE)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LLM" => Ok(Strategy::Llm),
            "PNAME" => Ok(Strategy::Pname),
            "PTYPE" => Ok(Strategy::Ptype),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    Extraction,
    ProductName,
    ProductType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePrompt {
    pub product_id: String,
    pub strategy: Strategy,
    pub text: String,
    pub source: PromptSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("strategy LLM needs an extraction for product {0}")]
    MissingExtraction(String),
    #[error("extraction belongs to product {found}, not {expected}")]
    ExtractionMismatch { expected: String, found: String },
    #[error("empty {strategy} prompt for product {product_id}")]
    EmptyText { product_id: String, strategy: Strategy },
}

pub fn build_prompt(
    product: &Product,
    strategy: Strategy,
    extraction: Option<&ExtractionResult>,
) -> Result<ImagePrompt, PromptError> {
    build_prompt_with_suffix(product, strategy, extraction, "")
}

/// Like [`build_prompt`], appending `suffix` verbatim.
pub fn build_prompt_with_suffix(
    product: &Product,
    strategy: Strategy,
    extraction: Option<&ExtractionResult>,
    suffix: &str,
) -> Result<ImagePrompt, PromptError> {
    let base = match strategy {
        Strategy::Llm => {
            let e = extraction.ok_or_else(|| PromptError::MissingExtraction(product.product_id.clone()))?;
            if e.product_id != product.product_id {
                return Err(PromptError::ExtractionMismatch {
                    expected: product.product_id.clone(),
                    found: e.product_id.clone(),
                });
            }
            e.sanitized_output.as_str()
        }
        Strategy::Pname => product.name.as_str(),
        Strategy::Ptype => product.product_type.as_str(),
    };
    if base.trim().is_empty() {
        return Err(PromptError::EmptyText {
            product_id: product.product_id.clone(),
            strategy,
        });
    }
    Ok(ImagePrompt {
        product_id: product.product_id.clone(),
        strategy,
        text: format!("{base}{suffix}"),
        source: strategy.source(),
    })
}
