//! Product-to-banner generation pipeline.
//!
//! Catalog rows are turned into text-to-image prompts by one of three
//! strategies (an LLM-written scene sentence, the raw product name, or the
//! product type), rendered by an external image service, stored
//! content-addressed, and evaluated with BRISQUE, Prompt Adherence Recall and
//! a blinded human rating survey.

pub mod brisque;
pub mod catalog;
pub mod config;
pub mod extraction;
pub mod imagegen;
pub mod ledger;
pub mod par;
pub mod personalization;
pub mod pipeline;
pub mod pool;
pub mod prompt;
pub mod retry;
pub mod service;
pub mod survey;

mod stats;

pub use catalog::{Catalog, CatalogFormat, Product, WordCountStats};
pub use prompt::{ImagePrompt, PromptSource, Strategy};
