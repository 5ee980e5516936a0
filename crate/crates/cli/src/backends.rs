//! Config resolution, catalog lookup and backend construction shared by the
//! subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bannerforge::catalog::{ingest_catalog, read_catalog, CatalogFormat};
use bannerforge::config::Config;
use bannerforge::extraction::{HttpTextGen, MockTextGen, PromptTemplate, TextGenClient};
use bannerforge::imagegen::{HttpImageGen, ImageGenClient, ImageStore, MockImageGen};
use bannerforge::par::{Detector, HttpDetector, MockDetector};
use bannerforge::pipeline::{Ledgers, CATALOG_FILE};
use bannerforge::Catalog;
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Mock,
    Http,
}

/// Global options shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct GlobalOpts {
    /// JSON config file.
    #[arg(long, global = true, env = "BANNERFORGE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Backend for every external service.
    #[arg(long, global = true, value_enum, default_value = "http")]
    pub backend: Backend,

    #[arg(long, global = true, value_enum)]
    pub textgen_backend: Option<Backend>,

    #[arg(long, global = true, value_enum)]
    pub imagegen_backend: Option<Backend>,

    #[arg(long, global = true, value_enum)]
    pub detector_backend: Option<Backend>,

    /// Make the mock text generator fail for this product id (repeatable).
    #[arg(long, global = true, value_name = "PRODUCT_ID")]
    pub mock_textgen_fail: Vec<String>,

    /// Ledger directory (overrides paths.ledgers).
    #[arg(long, global = true)]
    pub ledgers: Option<PathBuf>,

    /// Image store directory (overrides paths.image_store).
    #[arg(long, global = true)]
    pub image_store: Option<PathBuf>,

    /// Max concurrent backend calls (overrides imagegen.max_inflight).
    #[arg(long, global = true)]
    pub max_inflight: Option<usize>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

pub struct Env {
    pub config: Config,
    pub opts: GlobalOpts,
}

impl Env {
    pub fn load(opts: GlobalOpts) -> Result<Self> {
        let mut config =
            Config::read_with_env(opts.config.as_deref(), std::env::vars()).context("loading configuration")?;
        if let Some(dir) = &opts.ledgers {
            config.paths.ledgers = dir.clone();
        }
        if let Some(dir) = &opts.image_store {
            config.paths.image_store = dir.clone();
        }
        if let Some(n) = opts.max_inflight {
            config.imagegen.max_inflight = n;
        }
        config.validate().context("loading configuration")?;
        Ok(Self { config, opts })
    }

    pub fn ledgers(&self) -> Result<Ledgers> {
        Ledgers::open(&self.config.paths.ledgers)
            .with_context(|| format!("opening ledgers in {}", self.config.paths.ledgers.display()))
    }

    pub fn image_store(&self) -> ImageStore {
        ImageStore::new(&self.config.paths.image_store)
    }

    pub fn template(&self) -> Result<PromptTemplate> {
        match &self.config.paths.template {
            Some(p) => PromptTemplate::load(p).with_context(|| format!("loading template {}", p.display())),
            None => Ok(PromptTemplate::bundled()),
        }
    }

    pub fn ingested_catalog_path(&self) -> PathBuf {
        self.config.paths.ledgers.join(CATALOG_FILE)
    }

    /// `--catalog` flag, else the ingested copy in the ledger directory, else
    /// `paths.catalog`.
    pub fn catalog(&self, flag: Option<&Path>) -> Result<Catalog> {
        if let Some(p) = flag {
            return load_catalog_file(p);
        }
        let ingested = self.ingested_catalog_path();
        if ingested.exists() {
            let file = std::fs::File::open(&ingested)?;
            return read_catalog(file, CatalogFormat::Jsonl).with_context(|| format!("reading {}", ingested.display()));
        }
        match &self.config.paths.catalog {
            Some(p) => load_catalog_file(p),
            None => bail!("no catalog: run `ingest`, pass --catalog, or set paths.catalog"),
        }
    }

    fn kind(&self, specific: Option<Backend>) -> Backend {
        specific.unwrap_or(self.opts.backend)
    }

    pub fn textgen(&self, catalog: Option<&Catalog>) -> Result<Box<dyn TextGenClient>> {
        match self.kind(self.opts.textgen_backend) {
            Backend::Mock => {
                let mut mock = MockTextGen::new();
                for id in &self.opts.mock_textgen_fail {
                    let name = catalog
                        .and_then(|c| c.get(id))
                        .map(|p| p.name.clone())
                        .with_context(|| format!("--mock-textgen-fail: unknown product id {id}"))?;
                    mock = mock.failing_on(name);
                }
                Ok(Box::new(mock))
            }
            Backend::Http => {
                let t = &self.config.textgen;
                Ok(Box::new(HttpTextGen::new(&t.base_url, &t.auth_header)?))
            }
        }
    }

    pub fn imagegen(&self) -> Result<Box<dyn ImageGenClient>> {
        match self.kind(self.opts.imagegen_backend) {
            Backend::Mock => Ok(Box::new(MockImageGen::new())),
            Backend::Http => {
                let c = &self.config.imagegen;
                Ok(Box::new(HttpImageGen::new(&c.base_url, &c.auth_header, c.backend_id.as_deref())?))
            }
        }
    }

    pub fn detector(&self) -> Result<Box<dyn Detector>> {
        match self.kind(self.opts.detector_backend) {
            Backend::Mock => Ok(Box::new(MockDetector::default())),
            Backend::Http => {
                let d = &self.config.detector;
                Ok(Box::new(HttpDetector::new(&d.base_url, &d.auth_header)?))
            }
        }
    }
}

pub fn load_catalog_file(path: &Path) -> Result<Catalog> {
    let format = CatalogFormat::from_path(path)
        .with_context(|| format!("cannot tell catalog format of {} (use .csv or .jsonl)", path.display()))?;
    ingest_catalog(path, format).with_context(|| format!("reading catalog {}", path.display()))
}
