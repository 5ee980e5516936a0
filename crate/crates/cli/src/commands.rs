use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bannerforge::brisque::{parse_svr_model, score_png, summarize_scores};
use bannerforge::catalog::{sample_items, word_count_stats, write_catalog, CatalogFormat};
use bannerforge::extraction::SanitizeMode;
use bannerforge::imagegen::Generator;
use bannerforge::par::evaluate_par;
use bannerforge::personalization::{read_affinities, select_item};
use bannerforge::pipeline::{extract_batch, run_pipeline, RunContext, RunRequest, SURVEY_FILE};
use bannerforge::prompt::build_prompt_with_suffix;
use bannerforge::survey::server::serve_forever;
use bannerforge::survey::{create_survey, render_score_table, survey_report, RatingStore, SurveyManifest, SurveyState};
use bannerforge::{Catalog, Product, Strategy};
use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::backends::{load_catalog_file, Env};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a catalog file and store it in the ledger directory.
    Ingest {
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Product-name word count statistics.
    Stats {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Uniform sample of products of one type.
    Sample(SampleArgs),
    /// LLM attribute extraction for sampled or listed products.
    Extract {
        #[command(flatten)]
        sample: OptionalSample,
        /// Extract for these product ids instead of a sample (repeatable).
        #[arg(long = "product-id")]
        product_ids: Vec<String>,
        #[arg(long, value_enum)]
        sanitize_mode: Option<ModeArg>,
    },
    /// Generate one image for one product and strategy.
    Generate {
        #[arg(long)]
        product_id: String,
        #[arg(long)]
        strategy: Strategy,
        /// Image seed (defaults to imagegen.defaults.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full pipeline: sample, extract, build prompts, generate.
    Run {
        #[command(flatten)]
        sample: SampleArgs,
        /// Comma-separated strategies.
        #[arg(long, value_delimiter = ',', default_value = "LLM,PNAME,PTYPE")]
        strategies: Vec<Strategy>,
    },
    /// Pick one item per user by cohort affinity.
    Personalize {
        /// affinities.jsonl
        #[arg(long)]
        affinities: PathBuf,
        /// Restrict candidates to one product type.
        #[arg(long)]
        product_type: Option<String>,
        /// Restrict candidates to these ids (repeatable).
        #[arg(long = "product-id")]
        product_ids: Vec<String>,
    },
    #[command(subcommand)]
    Evaluate(Evaluate),
    #[command(subcommand)]
    Survey(Survey),
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Strict,
    Lenient,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    product_type: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct OptionalSample {
    #[arg(long, requires_all = ["n", "seed"])]
    product_type: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Evaluate {
    /// BRISQUE scores for every PNG in a directory.
    Brisque {
        #[arg(long)]
        images: PathBuf,
        /// SVR model file (defaults to paths.svr_model).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Feature range file (defaults to paths.svr_range).
        #[arg(long)]
        range: Option<PathBuf>,
    },
    /// Prompt Adherence Recall over the generation ledger.
    Par {
        /// Detection confidence threshold (defaults to detector.threshold).
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Survey {
    /// Serve the rating survey over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Restrict the survey to these products (repeatable).
        #[arg(long = "product-id")]
        product_ids: Vec<String>,
    },
    /// Aggregate the ratings ledger.
    Report {
        /// Print the method score table instead of JSON.
        #[arg(long)]
        table: bool,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn dispatch(env: &Env, command: Command) -> Result<ExitCode> {
    match command {
        Command::Ingest { catalog } => ingest(env, &catalog),
        Command::Stats { catalog } => {
            let c = env.catalog(catalog.as_deref())?;
            print_json(&word_count_stats(&c)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample(args) => {
            let c = env.catalog(None)?;
            let products = sample_items(&c, &args.product_type, args.n, args.seed)?;
            print_json(&json!({"product_type": args.product_type, "seed": args.seed, "products": products}))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract {
            sample,
            product_ids,
            sanitize_mode,
        } => extract(env, sample, product_ids, sanitize_mode),
        Command::Generate {
            product_id,
            strategy,
            seed,
        } => generate(env, &product_id, strategy, seed),
        Command::Run { sample, strategies } => run(env, sample, strategies),
        Command::Personalize {
            affinities,
            product_type,
            product_ids,
        } => personalize(env, &affinities, product_type, product_ids),
        Command::Evaluate(Evaluate::Brisque { images, model, range }) => brisque(env, &images, model, range),
        Command::Evaluate(Evaluate::Par { threshold }) => par(env, threshold),
        Command::Survey(Survey::Serve {
            port,
            host,
            product_ids,
        }) => serve(env, &host, port, product_ids),
        Command::Survey(Survey::Report { table }) => report(env, table),
    }
}

fn ingest(env: &Env, path: &Path) -> Result<ExitCode> {
    let catalog = load_catalog_file(path)?;
    let target = env.ingested_catalog_path();
    if let Some(dir) = target.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = target.with_extension("jsonl.tmp");
    write_catalog(&catalog, fs::File::create(&tmp)?, CatalogFormat::Jsonl)?;
    fs::rename(&tmp, &target)?;
    let mut types: BTreeMap<&str, usize> = BTreeMap::new();
    for p in catalog.iter() {
        *types.entry(&p.product_type).or_default() += 1;
    }
    print_json(&json!({
        "products": catalog.len(),
        "product_types": types,
        "stored_at": target,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn pick_products(catalog: &Catalog, ids: &[String]) -> Result<Vec<Product>> {
    ids.iter()
        .map(|id| catalog.get(id).cloned().with_context(|| format!("unknown product id {id}")))
        .collect()
}

fn mode(env: &Env, arg: Option<ModeArg>) -> SanitizeMode {
    match arg {
        Some(ModeArg::Strict) => SanitizeMode::Strict,
        Some(ModeArg::Lenient) => SanitizeMode::Lenient,
        None => env.config.sanitize_mode,
    }
}

/// Everything a pipeline context borrows, built once per command.
struct Wiring {
    template: bannerforge::extraction::PromptTemplate,
    textgen: Box<dyn bannerforge::extraction::TextGenClient>,
    imagegen: Box<dyn bannerforge::imagegen::ImageGenClient>,
    store: bannerforge::imagegen::ImageStore,
    ledgers: bannerforge::pipeline::Ledgers,
}

impl Wiring {
    fn new(env: &Env, catalog: &Catalog) -> Result<Self> {
        Ok(Self {
            template: env.template()?,
            textgen: env.textgen(Some(catalog))?,
            imagegen: env.imagegen()?,
            store: env.image_store(),
            ledgers: env.ledgers()?,
        })
    }

    fn context<'a>(&'a self, env: &Env, catalog: &'a Catalog, sanitize_mode: SanitizeMode) -> RunContext<'a> {
        let c = &env.config;
        RunContext {
            catalog,
            template: &self.template,
            textgen: self.textgen.as_ref(),
            imagegen: self.imagegen.as_ref(),
            store: &self.store,
            ledgers: &self.ledgers,
            sanitize_mode,
            textgen_params: c.textgen.params(),
            gen_defaults: c.imagegen.defaults,
            prompt_suffix: c.prompt_suffix.clone(),
            max_inflight: c.imagegen.max_inflight,
            retry: c.retry,
        }
    }
}

fn extract(env: &Env, sample: OptionalSample, ids: Vec<String>, mode_arg: Option<ModeArg>) -> Result<ExitCode> {
    let catalog = env.catalog(None)?;
    let products = match (&sample.product_type, ids.is_empty()) {
        (Some(t), true) => sample_items(&catalog, t, sample.n.unwrap_or(0), sample.seed.unwrap_or(0))?,
        (None, false) => pick_products(&catalog, &ids)?,
        _ => bail!("give either --product-type/--n/--seed or --product-id"),
    };
    let wiring = Wiring::new(env, &catalog)?;
    let ctx = wiring.context(env, &catalog, mode(env, mode_arg));
    let (ok, failed) = extract_batch(&ctx, &products)?;
    for f in &failed {
        wiring.ledgers.failures.append(f)?;
    }
    let code = if ok.is_empty() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
    print_json(&json!({"extractions": ok, "failures": failed}))?;
    Ok(code)
}

fn generate(env: &Env, product_id: &str, strategy: Strategy, seed: Option<u64>) -> Result<ExitCode> {
    let catalog = env.catalog(None)?;
    let product = catalog.get(product_id).with_context(|| format!("unknown product id {product_id}"))?;
    let ledgers = env.ledgers()?;
    let extraction = if strategy == Strategy::Llm {
        let latest = ledgers.latest_extractions()?;
        Some(
            latest
                .get(product_id)
                .cloned()
                .with_context(|| format!("no extraction for {product_id}; run `extract` first"))?,
        )
    } else {
        None
    };
    let prompt = build_prompt_with_suffix(product, strategy, extraction.as_ref(), &env.config.prompt_suffix)?;
    let params = match seed {
        Some(s) => env.config.imagegen.defaults.with_seed(s),
        None => env.config.imagegen.defaults,
    };
    let client = env.imagegen()?;
    let store = env.image_store();
    let generator = Generator {
        client: client.as_ref(),
        store: &store,
        ledger: &ledgers.generations,
        retry: env.config.retry,
    };
    let record = generator.generate(&prompt, &params)?;
    print_json(&record)?;
    Ok(ExitCode::SUCCESS)
}

fn run(env: &Env, sample: SampleArgs, strategies: Vec<Strategy>) -> Result<ExitCode> {
    let catalog = env.catalog(None)?;
    let wiring = Wiring::new(env, &catalog)?;
    let ctx = wiring.context(env, &catalog, env.config.sanitize_mode);
    let summary = run_pipeline(
        &ctx,
        &RunRequest {
            product_type: sample.product_type,
            n: sample.n,
            seed: sample.seed,
            strategies,
        },
    )?;
    print_json(&summary)?;
    if summary.total_failure {
        eprintln!("error: every generation failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn personalize(env: &Env, affinities: &Path, product_type: Option<String>, ids: Vec<String>) -> Result<ExitCode> {
    let catalog = env.catalog(None)?;
    let candidates: Vec<Product> = if !ids.is_empty() {
        pick_products(&catalog, &ids)?
    } else if let Some(t) = &product_type {
        catalog.of_type(t).cloned().collect()
    } else {
        catalog.products().to_vec()
    };
    let users = read_affinities(affinities)?;
    let selections = users
        .iter()
        .map(|u| select_item(u, &candidates))
        .collect::<Result<Vec<_>, _>>()?;
    print_json(&json!({ "selections": selections }))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ImageScore {
    file: String,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<Strategy>,
}

#[derive(Serialize)]
struct ImageFailure {
    file: String,
    error: String,
}

fn brisque(env: &Env, images: &Path, model: Option<PathBuf>, range: Option<PathBuf>) -> Result<ExitCode> {
    let model_path = model
        .or_else(|| env.config.paths.svr_model.clone())
        .context("no SVR model: pass --model or set paths.svr_model")?;
    let range_path = range
        .or_else(|| env.config.paths.svr_range.clone())
        .context("no feature ranges: pass --range or set paths.svr_range")?;
    let model = parse_svr_model(&model_path, &range_path)?;

    let mut files: Vec<PathBuf> = fs::read_dir(images)
        .with_context(|| format!("reading {}", images.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();

    // Files named by content hash can be traced back to their strategy.
    let by_hash: BTreeMap<String, Strategy> = match env.ledgers() {
        Ok(l) => l
            .generations
            .read_all()
            .unwrap_or_default()
            .into_iter()
            .map(|r| (r.image_hash, r.strategy))
            .collect(),
        Err(_) => BTreeMap::new(),
    };

    let scored = bannerforge::pool::map_bounded(&files, env.config.imagegen.max_inflight.max(2), |path| {
        let bytes = fs::read(path).map_err(|e| e.to_string())?;
        score_png(&bytes, &model).map(|(_, s)| s).map_err(|e| e.to_string())
    });
    let mut per_image = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in files.iter().zip(scored) {
        let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match result {
            Ok(score) => {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                per_image.push(ImageScore {
                    strategy: by_hash.get(stem.as_ref()).copied(),
                    file,
                    score,
                });
            }
            Err(error) => failures.push(ImageFailure { file, error }),
        }
    }
    if per_image.is_empty() {
        print_json(&json!({"per_image": [], "failures": failures}))?;
        bail!("no image in {} could be scored", images.display());
    }
    let scores: Vec<f64> = per_image.iter().map(|s| s.score).collect();
    let all = summarize_scores(&scores)?;
    let mut per_strategy = BTreeMap::new();
    for s in Strategy::ALL {
        let v: Vec<f64> = per_image.iter().filter(|i| i.strategy == Some(s)).map(|i| i.score).collect();
        if let Ok(summary) = summarize_scores(&v) {
            per_strategy.insert(s, summary);
        }
    }
    print_json(&json!({
        "per_image": per_image,
        "mean": all.mean,
        "std_dev": all.std_dev,
        "n": all.n,
        "per_strategy": per_strategy,
        "failures": failures,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn par(env: &Env, threshold: Option<f64>) -> Result<ExitCode> {
    let ledgers = env.ledgers()?;
    let records = ledgers.generations.read_all()?;
    if records.is_empty() {
        bail!("generation ledger is empty");
    }
    let extractions: Vec<_> = ledgers.latest_extractions()?.into_values().collect();
    let detector = env.detector()?;
    let report = evaluate_par(
        &records,
        &extractions,
        &env.image_store(),
        detector.as_ref(),
        threshold.unwrap_or(env.config.detector.threshold),
        env.config.imagegen.max_inflight,
        &env.config.retry,
    )?;
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

fn survey_manifest(env: &Env, ids: &[String]) -> Result<SurveyManifest> {
    let ledgers = env.ledgers()?;
    let records = ledgers.generations.read_all()?;
    let catalog = env.catalog(None)?;
    let wanted: BTreeSet<&str> = if ids.is_empty() {
        records.iter().map(|r| r.product_id.as_str()).collect()
    } else {
        ids.iter().map(String::as_str).collect()
    };
    if wanted.is_empty() {
        bail!("no generated images to survey");
    }
    let products: Vec<Product> = wanted
        .iter()
        .map(|id| catalog.get(id).cloned().with_context(|| format!("product {id} is not in the catalog")))
        .collect::<Result<_>>()?;
    Ok(create_survey(&products, &records, env.config.survey.seed)?)
}

fn serve(env: &Env, host: &str, port: u16, ids: Vec<String>) -> Result<ExitCode> {
    let manifest = survey_manifest(env, &ids)?;
    let ledgers = env.ledgers()?;
    fs::write(ledgers.dir().join(SURVEY_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    let tasks = manifest.tasks.len();
    let state = SurveyState {
        manifest,
        ratings: RatingStore::open(ledgers.ratings_path())?,
        images: env.image_store(),
    };
    let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
    serve_forever(state, addr, |bound| {
        let line = json!({"listening": format!("http://{bound}"), "tasks": tasks});
        println!("{line}");
        let _ = std::io::stdout().flush();
        log::info!("survey served on http://{bound}");
    })?;
    Ok(ExitCode::SUCCESS)
}

fn report(env: &Env, table: bool) -> Result<ExitCode> {
    let ledgers = env.ledgers()?;
    let ratings = ledgers.read_ratings()?;
    let manifest_path = ledgers.dir().join(SURVEY_FILE);
    let manifest: Option<SurveyManifest> = if manifest_path.exists() {
        Some(serde_json::from_slice(&fs::read(&manifest_path)?)?)
    } else {
        None
    };
    let report = survey_report(&ratings, manifest.as_ref());
    if table {
        print!("{}", render_score_table(&report));
    } else {
        print_json(&report)?;
    }
    Ok(ExitCode::SUCCESS)
}
