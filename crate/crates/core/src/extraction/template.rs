//! Attribute-extraction prompt templates.
//!
//! Template files are UTF-8 text holding exactly one `{{PRODUCT_NAME}}`
//! placeholder. A backslash at the end of a line joins it with the next line,
//! the same way a non-raw string literal spanning source lines would. Files
//! laid out as a `<<SYS>> … <</SYS>>` block followed by an `[INST] … [/INST]`
//! block load with the [`Wrapper::InstSys`] chat wrapper.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Product;

pub const PRODUCT_NAME_PLACEHOLDER: &str = "{{PRODUCT_NAME}}";

const SYS_OPEN: &str = "<<SYS>>";
const SYS_CLOSE: &str = "<</SYS>>";
const INST_OPEN: &str = "[INST]";
const INST_CLOSE: &str = "[/INST]";
const BLOCK_SEPARATOR: &str = " \n\n\n";
const TAIL: &str = " \n";

const BUNDLED: &str = include_str!("../../assets/attribute_prompt.txt");

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("user text must contain `{{{{PRODUCT_NAME}}}}` exactly once (found {0})")]
    PlaceholderCount(usize),
    #[error("system text must not contain `{{{{PRODUCT_NAME}}}}`")]
    PlaceholderInSystem,
    #[error("malformed chat blocks: {0}")]
    MalformedBlocks(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

/// Chat-delimiter wrapping applied around the rendered text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wrapper {
    None,
    InstSys,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    system_text: String,
    user_text: String,
    wrapper: Wrapper,
}

impl PromptTemplate {
    pub fn new(
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        wrapper: Wrapper,
    ) -> Result<Self, TemplateError> {
        let system_text = system_text.into();
        let user_text = user_text.into();
        let count = user_text.matches(PRODUCT_NAME_PLACEHOLDER).count();
        if count != 1 {
            return Err(TemplateError::PlaceholderCount(count));
        }
        if system_text.contains(PRODUCT_NAME_PLACEHOLDER) {
            return Err(TemplateError::PlaceholderInSystem);
        }
        Ok(Self {
            system_text,
            user_text,
            wrapper,
        })
    }

    /// The attribute-extraction prompt shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled template is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&source)
    }

    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let text = join_continuations(source);
        if !text.trim_start().starts_with(SYS_OPEN) {
            return Self::new("", text, Wrapper::None);
        }
        let body = text.trim_start().strip_prefix(SYS_OPEN).unwrap_or_default();
        let (system, rest) = body
            .split_once(SYS_CLOSE)
            .ok_or_else(|| TemplateError::MalformedBlocks(format!("missing {SYS_CLOSE}")))?;
        let rest = rest.trim_start();
        let rest = rest
            .strip_prefix(INST_OPEN)
            .ok_or_else(|| TemplateError::MalformedBlocks(format!("expected {INST_OPEN} after {SYS_CLOSE}")))?;
        let (user, tail) = rest
            .rsplit_once(INST_CLOSE)
            .ok_or_else(|| TemplateError::MalformedBlocks(format!("missing {INST_CLOSE}")))?;
        if !tail.trim().is_empty() {
            return Err(TemplateError::MalformedBlocks(format!("text after {INST_CLOSE}")));
        }
        Self::new(system, user, Wrapper::InstSys)
    }

    pub fn system_text(&self) -> &str {
        &self.system_text
    }

    pub fn user_text(&self) -> &str {
        &self.user_text
    }

    pub fn wrapper(&self) -> Wrapper {
        self.wrapper
    }

    /// Substitutes the product name in a single pass; placeholder syntax
    /// inside the name itself is left untouched.
    pub fn render(&self, product_name: &str) -> String {
        let user = self.user_text.replacen(PRODUCT_NAME_PLACEHOLDER, product_name, 1);
        match self.wrapper {
            Wrapper::None => format!("{}{}", self.system_text, user),
            Wrapper::InstSys => format!(
                "{SYS_OPEN}{}{SYS_CLOSE}{BLOCK_SEPARATOR}{INST_OPEN}{user}{INST_CLOSE}{TAIL}",
                self.system_text
            ),
        }
    }
}

/// Removes backslash-newline line continuations.
pub fn join_continuations(source: &str) -> String {
    source.replace("\\\r\n", "").replace("\\\n", "")
}

pub fn render_llm_prompt(product: &Product, template: &PromptTemplate) -> String {
    template.render(&product.name)
}
