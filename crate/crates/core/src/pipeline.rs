//! Batch orchestration: sample → extract (LLM strategy only) → build prompts
//! → generate → ledgers. Per-item failures are collected, never fatal.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{sample_items, Catalog, CatalogError, Product};
use crate::extraction::{extract_attributes, ExtractionResult, PromptTemplate, SanitizeMode, TextGenClient, TextGenParams};
use crate::imagegen::{generate_image, item_seed, record_id, GenParams, GenerationRecord, ImageGenClient, ImageStore, RecordKey};
use crate::ledger::{JsonlLedger, LedgerError};
use crate::pool::run_ordered;
use crate::prompt::{build_prompt_with_suffix, ImagePrompt, Strategy};
use crate::retry::RetryPolicy;
use crate::survey::RatingRecord;

pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const EXTRACTIONS_FILE: &str = "extractions.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const SURVEY_FILE: &str = "survey.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("no strategies requested")]
    NoStrategies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Prompt,
    Generate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: Stage,
    pub product_id: String,
    pub strategy: Option<Strategy>,
    pub error: String,
    pub at: DateTime<Utc>,
}

/// The run ledgers of one output directory.
pub struct Ledgers {
    dir: PathBuf,
    pub generations: JsonlLedger<GenerationRecord>,
    pub extractions: JsonlLedger<ExtractionResult>,
    pub failures: JsonlLedger<FailureRecord>,
}

impl Ledgers {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let dir = dir.as_ref().to_path_buf();
        Ok(Self {
            generations: JsonlLedger::open(dir.join(GENERATIONS_FILE))?,
            extractions: JsonlLedger::open(dir.join(EXTRACTIONS_FILE))?,
            failures: JsonlLedger::open(dir.join(FAILURES_FILE))?,
            dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ratings_path(&self) -> PathBuf {
        self.dir.join(RATINGS_FILE)
    }

    pub fn read_ratings(&self) -> Result<Vec<RatingRecord>, LedgerError> {
        crate::ledger::read_jsonl(self.ratings_path())
    }

    /// Latest extraction per product.
    pub fn latest_extractions(&self) -> Result<HashMap<String, ExtractionResult>, LedgerError> {
        Ok(self
            .extractions
            .read_all()?
            .into_iter()
            .map(|e| (e.product_id.clone(), e))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub product_type: String,
    pub n: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
}

pub struct RunContext<'a> {
    pub catalog: &'a Catalog,
    pub template: &'a PromptTemplate,
    pub textgen: &'a dyn TextGenClient,
    pub imagegen: &'a dyn ImageGenClient,
    pub store: &'a ImageStore,
    pub ledgers: &'a Ledgers,
    pub sanitize_mode: SanitizeMode,
    pub textgen_params: TextGenParams,
    pub gen_defaults: GenParams,
    pub prompt_suffix: String,
    pub max_inflight: usize,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub product_type: String,
    pub seed: u64,
    pub products: Vec<String>,
    pub strategies: Vec<Strategy>,
    pub extracted: usize,
    pub attempted: usize,
    pub generated: usize,
    pub skipped_existing: usize,
    pub record_ids: Vec<String>,
    pub failure_count: usize,
    pub failures: Vec<FailureRecord>,
    pub flagged_products: Vec<String>,
    /// At least one generation was attempted and none succeeded.
    pub total_failure: bool,
}

/// Extracts for each product with bounded concurrency. Successes are
/// appended to the extraction ledger in product order.
pub fn extract_batch(
    ctx: &RunContext<'_>,
    products: &[Product],
) -> Result<(Vec<ExtractionResult>, Vec<FailureRecord>), LedgerError> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    let mut ledger_error = None;
    run_ordered(
        products,
        ctx.max_inflight,
        |p| {
            extract_attributes(
                p,
                ctx.template,
                ctx.textgen,
                ctx.sanitize_mode,
                &ctx.textgen_params,
                &ctx.retry,
            )
        },
        |i, result| match result {
            Ok(r) => {
                if ledger_error.is_none() {
                    if let Err(e) = ctx.ledgers.extractions.append(&r) {
                        ledger_error = Some(e);
                    }
                }
                ok.push(r);
            }
            Err(e) => {
                log::warn!("extraction failed for {}: {e}", products[i].product_id);
                failed.push(FailureRecord {
                    stage: Stage::Extract,
                    product_id: products[i].product_id.clone(),
                    strategy: Some(Strategy::Llm),
                    error: e.to_string(),
                    at: Utc::now(),
                });
            }
        },
    );
    match ledger_error {
        Some(e) => Err(e),
        None => Ok((ok, failed)),
    }
}

pub fn run_pipeline(ctx: &RunContext<'_>, req: &RunRequest) -> Result<RunSummary, PipelineError> {
    let strategies: Vec<Strategy> = {
        let set: BTreeSet<Strategy> = req.strategies.iter().copied().collect();
        set.into_iter().collect()
    };
    if strategies.is_empty() {
        return Err(PipelineError::NoStrategies);
    }
    let products = sample_items(ctx.catalog, &req.product_type, req.n, req.seed)?;
    log::info!("sampled {} products of type `{}`", products.len(), req.product_type);

    let mut failures = Vec::new();
    let mut extractions: HashMap<String, ExtractionResult> = HashMap::new();
    if strategies.contains(&Strategy::Llm) {
        let (ok, failed) = extract_batch(ctx, &products)?;
        extractions.extend(ok.into_iter().map(|e| (e.product_id.clone(), e)));
        failures.extend(failed);
    }
    let extracted = extractions.len();
    let failed_extraction: HashSet<String> = failures.iter().map(|f| f.product_id.clone()).collect();

    let mut prompts: Vec<ImagePrompt> = Vec::new();
    for p in &products {
        for &s in &strategies {
            if s == Strategy::Llm && failed_extraction.contains(&p.product_id) {
                continue;
            }
            match build_prompt_with_suffix(p, s, extractions.get(&p.product_id), &ctx.prompt_suffix) {
                Ok(prompt) => prompts.push(prompt),
                Err(e) => failures.push(FailureRecord {
                    stage: Stage::Prompt,
                    product_id: p.product_id.clone(),
                    strategy: Some(s),
                    error: e.to_string(),
                    at: Utc::now(),
                }),
            }
        }
    }

    let params_of = |p: &ImagePrompt| ctx.gen_defaults.with_seed(item_seed(req.seed, &p.product_id));
    let backend_id = ctx.imagegen.backend_id().to_string();
    let existing: HashSet<RecordKey> = ctx.ledgers.generations.read_all()?.iter().map(GenerationRecord::key).collect();
    let (todo, skipped): (Vec<ImagePrompt>, Vec<ImagePrompt>) = prompts.into_iter().partition(|p| {
        !existing.contains(&(p.product_id.clone(), p.strategy, params_of(p).seed, backend_id.clone()))
    });
    for p in &skipped {
        log::info!(
            "skipping {} / {}: record {} already in the ledger",
            p.product_id,
            p.strategy,
            record_id(&p.product_id, p.strategy, params_of(p).seed, &backend_id)
        );
    }

    let mut record_ids = Vec::new();
    let mut ledger_error = None;
    run_ordered(
        &todo,
        ctx.max_inflight,
        |prompt| generate_image(prompt, &params_of(prompt), ctx.imagegen, ctx.store, &ctx.retry),
        |i, result| match result {
            Ok(record) => {
                if ledger_error.is_none() {
                    match ctx.ledgers.generations.append(&record) {
                        Ok(()) => record_ids.push(record.record_id),
                        Err(e) => ledger_error = Some(e),
                    }
                }
            }
            Err(e) => {
                log::warn!("generation failed for {} / {}: {e}", todo[i].product_id, todo[i].strategy);
                failures.push(FailureRecord {
                    stage: Stage::Generate,
                    product_id: todo[i].product_id.clone(),
                    strategy: Some(todo[i].strategy),
                    error: e.to_string(),
                    at: Utc::now(),
                });
            }
        },
    );
    if let Some(e) = ledger_error {
        return Err(e.into());
    }
    for f in &failures {
        ctx.ledgers.failures.append(f)?;
    }

    let flagged: BTreeSet<String> = failures.iter().map(|f| f.product_id.clone()).collect();
    let generated = record_ids.len();
    Ok(RunSummary {
        product_type: req.product_type.clone(),
        seed: req.seed,
        products: products.iter().map(|p| p.product_id.clone()).collect(),
        strategies,
        extracted,
        attempted: todo.len(),
        generated,
        skipped_existing: skipped.len(),
        record_ids,
        failure_count: failures.len(),
        failures,
        flagged_products: flagged.into_iter().collect(),
        total_failure: !todo.is_empty() && generated == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::MockTextGen;
    use crate::imagegen::MockImageGen;

    fn catalog(n: usize) -> Catalog {
        Catalog::new(
            (0..n)
                .map(|i| Product {
                    product_id: format!("bed-{i:02}"),
                    name: format!("Cozy Orthopedic Dog Bed Model {i}, Gray"),
                    product_type: "pet beds".into(),
                    cohort: "pet-owner".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn small() -> GenParams {
        GenParams {
            width: 64,
            height: 64,
            steps: 10,
            guidance: 7.5,
            seed: 0,
        }
    }

    struct Env {
        _dir: tempfile::TempDir,
        store: ImageStore,
        ledgers: Ledgers,
    }

    fn env() -> Env {
        let dir = tempfile::tempdir().unwrap();
        Env {
            store: ImageStore::new(dir.path().join("images")),
            ledgers: Ledgers::open(dir.path().join("ledgers")).unwrap(),
            _dir: dir,
        }
    }

    fn run(env: &Env, cat: &Catalog, text: &dyn TextGenClient, img: &dyn ImageGenClient, n: usize) -> RunSummary {
        let template = PromptTemplate::bundled();
        let ctx = RunContext {
            catalog: cat,
            template: &template,
            textgen: text,
            imagegen: img,
            store: &env.store,
            ledgers: &env.ledgers,
            sanitize_mode: SanitizeMode::Lenient,
            textgen_params: TextGenParams::default(),
            gen_defaults: small(),
            prompt_suffix: String::new(),
            max_inflight: 3,
            retry: RetryPolicy {
                attempts: 2,
                base_delay_ms: 0,
            },
        };
        run_pipeline(
            &ctx,
            &RunRequest {
                product_type: "pet beds".into(),
                n,
                seed: 11,
                strategies: Strategy::ALL.to_vec(),
            },
        )
        .unwrap()
    }

    #[test]
    fn five_products_fifteen_records() {
        let e = env();
        let s = run(&e, &catalog(8), &MockTextGen::new(), &MockImageGen::new(), 5);
        assert_eq!((s.generated, s.failure_count, s.total_failure), (15, 0, false));
        let recs = e.ledgers.generations.read_all().unwrap();
        assert_eq!(recs.len(), 15);
        // Ledger order follows product order, then strategy order.
        let order: Vec<(String, Strategy)> = recs.iter().map(|r| (r.product_id.clone(), r.strategy)).collect();
        let expected: Vec<(String, Strategy)> = s
            .products
            .iter()
            .flat_map(|p| Strategy::ALL.map(|st| (p.clone(), st)))
            .collect();
        assert_eq!(order, expected);

        // Same ledger again: everything is already there.
        let again = run(&e, &catalog(8), &MockTextGen::new(), &MockImageGen::new(), 5);
        assert_eq!((again.generated, again.skipped_existing, again.total_failure), (0, 15, false));
    }

    #[test]
    fn text_failure_flags_one_product() {
        let e = env();
        let cat = catalog(5);
        let victim = cat.products()[2].name.clone();
        let s = run(&e, &cat, &MockTextGen::new().failing_on(victim), &MockImageGen::new(), 5);
        assert_eq!(s.generated, 14);
        assert_eq!(s.flagged_products, vec!["bed-02".to_string()]);
        assert!(!s.total_failure);
        assert_eq!(e.ledgers.failures.read_all().unwrap().len(), 1);
    }

    #[test]
    fn garbage_backend_is_total_failure() {
        let e = env();
        let s = run(&e, &catalog(3), &MockTextGen::new(), &MockImageGen::garbage(), 3);
        assert_eq!((s.generated, s.attempted, s.failure_count), (0, 9, 9));
        assert!(s.total_failure);
    }

    #[test]
    fn replay_matches_and_store_has_no_orphans() {
        let strip = |e: &Env| -> Vec<serde_json::Value> {
            e.ledgers
                .generations
                .read_all()
                .unwrap()
                .into_iter()
                .map(|r| {
                    let mut v = serde_json::to_value(r).unwrap();
                    v.as_object_mut().unwrap().remove("created_at");
                    v
                })
                .collect()
        };
        let (a, b) = (env(), env());
        run(&a, &catalog(6), &MockTextGen::new(), &MockImageGen::new(), 4);
        run(&b, &catalog(6), &MockTextGen::new(), &MockImageGen::new(), 4);
        assert_eq!(strip(&a), strip(&b));

        let hashes: BTreeSet<String> = a.ledgers.generations.read_all().unwrap().into_iter().map(|r| r.image_hash).collect();
        let stored: BTreeSet<String> = a.store.hashes().unwrap().into_iter().collect();
        assert_eq!(hashes, stored);
        assert_eq!(stored.len(), 12);
    }
}
