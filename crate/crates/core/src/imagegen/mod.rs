//! Image generation: call the text-to-image backend, persist the PNG
//! content-addressed, and describe the result as a [`GenerationRecord`].

pub mod client;
pub mod params;
pub mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::{JsonlLedger, LedgerError};
use crate::prompt::{ImagePrompt, Strategy};
use crate::retry::RetryPolicy;
use crate::service::ServiceError;

pub use client::{HttpImageGen, ImageGenClient, ImageGenRequest, MockImageGen, MOCK_BACKEND_ID};
pub use params::{GenParams, ParamsError};
pub use store::{ImageStore, StoreError};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("image backend failed: {0}")]
    Service(#[from] ServiceError),
    #[error("backend reply is not a decodable PNG: {0}")]
    Decode(String),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("record for ({product_id}, {strategy}, seed {seed}, {backend_id}) already exists in this run")]
    Duplicate {
        product_id: String,
        strategy: Strategy,
        seed: u64,
        backend_id: String,
    },
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Service(e) if e.is_retryable())
    }
}

/// One line of the generation ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub record_id: String,
    pub product_id: String,
    pub strategy: Strategy,
    pub prompt_text: String,
    pub params: GenParams,
    pub image_hash: String,
    pub created_at: DateTime<Utc>,
    pub backend_id: String,
}

/// The uniqueness key of a record within one run.
pub type RecordKey = (String, Strategy, u64, String);

impl GenerationRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.product_id.clone(),
            self.strategy,
            self.params.seed,
            self.backend_id.clone(),
        )
    }
}

/// Deterministic record id: the first 16 hex digits of the SHA-256 of the
/// record key.
pub fn record_id(product_id: &str, strategy: Strategy, seed: u64, backend_id: &str) -> String {
    let mut h = Sha256::new();
    for part in [product_id, strategy.as_str(), &seed.to_string(), backend_id] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Image seed of one product within a run: the first 8 bytes (little endian)
/// of the SHA-256 of the run seed and the product id. All strategies of a
/// product share it, while products with identical prompt text still get
/// distinct images.
pub fn item_seed(run_seed: u64, product_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(product_id.as_bytes());
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

/// Generates, validates and stores one image. Does not touch any ledger.
pub fn generate_image(
    prompt: &ImagePrompt,
    params: &GenParams,
    client: &dyn ImageGenClient,
    store: &ImageStore,
    retry: &RetryPolicy,
) -> Result<GenerationRecord, GenerationError> {
    params.validate()?;
    let request = ImageGenRequest::new(&prompt.text, params);
    let bytes = retry.run(|_| client.generate(&request))?;
    let image_hash = store.store(&bytes).map_err(|e| match e {
        StoreError::NotPng(msg) => GenerationError::Decode(msg),
        other => GenerationError::Store(other),
    })?;
    let backend_id = client.backend_id().to_string();
    Ok(GenerationRecord {
        record_id: record_id(&prompt.product_id, prompt.strategy, params.seed, &backend_id),
        product_id: prompt.product_id.clone(),
        strategy: prompt.strategy,
        prompt_text: prompt.text.clone(),
        params: *params,
        image_hash,
        created_at: Utc::now(),
        backend_id,
    })
}

/// Generation bound to a backend, a store and the run ledger.
pub struct Generator<'a> {
    pub client: &'a dyn ImageGenClient,
    pub store: &'a ImageStore,
    pub ledger: &'a JsonlLedger<GenerationRecord>,
    pub retry: RetryPolicy,
}

impl Generator<'_> {
    /// Generates one image and appends its record, refusing keys already
    /// present in the ledger.
    pub fn generate(&self, prompt: &ImagePrompt, params: &GenParams) -> Result<GenerationRecord, GenerationError> {
        let backend_id = self.client.backend_id().to_string();
        let key: RecordKey = (prompt.product_id.clone(), prompt.strategy, params.seed, backend_id);
        if self.ledger.read_all()?.iter().any(|r| r.key() == key) {
            return Err(GenerationError::Duplicate {
                product_id: key.0,
                strategy: key.1,
                seed: key.2,
                backend_id: key.3,
            });
        }
        let record = generate_image(prompt, params, self.client, self.store, &self.retry)?;
        self.ledger.append(&record)?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptSource;

    fn prompt(text: &str) -> ImagePrompt {
        ImagePrompt {
            product_id: "p1".into(),
            strategy: Strategy::Ptype,
            text: text.into(),
            source: PromptSource::ProductType,
        }
    }

    fn small(seed: u64) -> GenParams {
        GenParams {
            width: 64,
            height: 64,
            steps: 20,
            guidance: 7.5,
            seed,
        }
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 0,
        }
    }

    #[test]
    fn same_prompt_and_seed_same_hash() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path());
        let m = MockImageGen::new();
        let a = generate_image(&prompt("x"), &small(7), &m, &store, &no_wait()).unwrap();
        let b = generate_image(&prompt("x"), &small(7), &m, &store, &no_wait()).unwrap();
        assert_eq!(a.image_hash, b.image_hash);
        assert_eq!(a.record_id, b.record_id);
        assert!(store.contains(&a.image_hash));
        assert_eq!(store.hashes().unwrap().len(), 1);
    }

    #[test]
    fn garbage_reply_is_decode_failure() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path());
        let err = generate_image(&prompt("x"), &small(1), &MockImageGen::garbage(), &store, &no_wait()).unwrap_err();
        assert!(matches!(err, GenerationError::Decode(_)));
        assert!(store.hashes().unwrap().is_empty());
    }

    #[test]
    fn invalid_params_rejected_before_calling_backend() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path());
        let bad = GenParams { width: 10, ..small(1) };
        let err = generate_image(&prompt("x"), &bad, &MockImageGen::new(), &store, &no_wait()).unwrap_err();
        assert!(matches!(err, GenerationError::Params(_)));
    }

    #[test]
    fn generator_appends_and_refuses_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let store = ImageStore::new(dir.path().join("img"));
        let ledger = JsonlLedger::open(dir.path().join("gen.jsonl")).unwrap();
        let m = MockImageGen::new();
        let g = Generator {
            client: &m,
            store: &store,
            ledger: &ledger,
            retry: no_wait(),
        };
        let r = g.generate(&prompt("pet beds"), &small(3)).unwrap();
        assert_eq!(ledger.read_all().unwrap(), vec![r]);
        assert!(matches!(
            g.generate(&prompt("pet beds"), &small(3)),
            Err(GenerationError::Duplicate { .. })
        ));
        g.generate(&prompt("pet beds"), &small(4)).unwrap();
        assert_eq!(ledger.read_all().unwrap().len(), 2);
    }

    #[test]
    fn item_seed_is_stable_and_per_product() {
        assert_eq!(item_seed(7, "p1"), item_seed(7, "p1"));
        assert_ne!(item_seed(7, "p1"), item_seed(7, "p2"));
        assert_ne!(item_seed(7, "p1"), item_seed(8, "p1"));
    }

    #[test]
    fn record_id_depends_on_key() {
        let a = record_id("p", Strategy::Llm, 1, "b");
        assert_eq!(a.len(), 16);
        assert_eq!(a, record_id("p", Strategy::Llm, 1, "b"));
        assert_ne!(a, record_id("p", Strategy::Pname, 1, "b"));
        assert_ne!(a, record_id("p", Strategy::Llm, 2, "b"));
    }
}
