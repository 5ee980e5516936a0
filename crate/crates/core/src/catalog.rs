//! Product catalog ingestion, name word-count statistics and seeded sampling.
//!
//! Accepted inputs are a headed, comma-separated UTF-8 CSV file or a JSON-lines
//! file, both carrying `product_id`, `name`, `product_type` and `cohort`. An
//! empty cohort defaults to the product type.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::mean_and_population_std;

pub const MAX_NAME_CHARS: usize = 1000;

const REQUIRED_FIELDS: [&str; 4] = ["product_id", "name", "product_type", "cohort"];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: u64, field: &'static str },
    #[error("line {line}: invalid `{field}`: {reason}")]
    InvalidField {
        line: u64,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate product_id `{id}` on line {line}")]
    DuplicateId { id: String, line: u64 },
    #[error("catalog is empty")]
    Empty,
    #[error("requested {requested} items of type `{product_type}` but only {available} exist")]
    InsufficientItems {
        product_type: String,
        requested: usize,
        available: usize,
    },
    #[error("sample size must be positive")]
    ZeroSample,
    #[error("unknown catalog format `{0}` (expected csv or jsonl)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogFormat {
    Csv,
    Jsonl,
}

impl CatalogFormat {
    /// Guesses the format from a file extension (`.csv`, `.jsonl`, `.ndjson`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for CatalogFormat {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "ndjson" => Ok(Self::Jsonl),
            other => Err(CatalogError::UnknownFormat(other.to_string())),
        }
    }
}

/// One catalog row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    pub name: String,
    pub product_type: String,
    pub cohort: String,
}

impl Product {
    /// Validates and normalizes one row. `line` is used for error reporting.
    fn from_fields(
        line: u64,
        product_id: String,
        name: String,
        product_type: String,
        cohort: Option<String>,
    ) -> Result<Self, CatalogError> {
        let invalid = |field, reason: &str| CatalogError::InvalidField {
            line,
            field,
            reason: reason.to_string(),
        };
        if product_id.is_empty() {
            return Err(invalid("product_id", "must not be empty"));
        }
        if name.trim().is_empty() {
            return Err(invalid("name", "must not be blank"));
        }
        if name.chars().count() > MAX_NAME_CHARS {
            return Err(invalid("name", "longer than 1000 characters"));
        }
        if product_type.trim().is_empty() {
            return Err(invalid("product_type", "must not be blank"));
        }
        let cohort = match cohort {
            Some(c) if !c.trim().is_empty() => c,
            _ => product_type.clone(),
        };
        Ok(Self {
            product_id,
            name,
            product_type,
            cohort,
        })
    }

    /// Number of maximal non-whitespace runs in the name.
    pub fn name_word_count(&self) -> usize {
        word_count(&self.name)
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// An ordered, validated, immutable collection of products with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Catalog {
    products: Vec<Product>,
}

impl Catalog {
    /// Builds a catalog from already-parsed products, enforcing id uniqueness.
    pub fn new(products: Vec<Product>) -> Result<Self, CatalogError> {
        let mut seen = HashSet::new();
        for (i, p) in products.iter().enumerate() {
            if !seen.insert(p.product_id.as_str()) {
                return Err(CatalogError::DuplicateId {
                    id: p.product_id.clone(),
                    line: i as u64 + 1,
                });
            }
        }
        Ok(Self { products })
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn iter(&self) -> impl Iterator<Item = &Product> {
        self.products.iter()
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, product_id: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.product_id == product_id)
    }

    pub fn of_type<'a>(&'a self, product_type: &'a str) -> impl Iterator<Item = &'a Product> + 'a {
        self.products
            .iter()
            .filter(move |p| p.product_type == product_type)
    }
}

/// Reads and validates a catalog file.
pub fn ingest_catalog(path: impl AsRef<Path>, format: CatalogFormat) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_catalog(BufReader::new(file), format)
}

pub fn read_catalog<R: Read>(reader: R, format: CatalogFormat) -> Result<Catalog, CatalogError> {
    let rows = match format {
        CatalogFormat::Csv => read_csv(reader)?,
        CatalogFormat::Jsonl => read_jsonl(BufReader::new(reader))?,
    };
    let mut seen = HashSet::new();
    let mut products = Vec::with_capacity(rows.len());
    for (line, product) in rows {
        if !seen.insert(product.product_id.clone()) {
            return Err(CatalogError::DuplicateId {
                id: product.product_id,
                line,
            });
        }
        products.push(product);
    }
    Ok(Catalog { products })
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<(u64, Product)>, CatalogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let csv_err = |e: csv::Error| CatalogError::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut columns = [0usize; 4];
    for (slot, field) in columns.iter_mut().zip(REQUIRED_FIELDS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == field)
            .ok_or(CatalogError::MissingField { line: 1, field })?;
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(columns[i]).unwrap_or("").to_string();
        let product = Product::from_fields(line, get(0), get(1), get(2), Some(get(3)))?;
        out.push((line, product));
    }
    Ok(out)
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<(u64, Product)>, CatalogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| CatalogError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| CatalogError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| CatalogError::Parse {
            line: line_no,
            message: "expected a JSON object".to_string(),
        })?;
        let field = |name: &'static str| -> Result<Option<String>, CatalogError> {
            match obj.get(name) {
                None => Err(CatalogError::MissingField { line: line_no, field: name }),
                Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(CatalogError::InvalidField {
                    line: line_no,
                    field: name,
                    reason: "expected a string".to_string(),
                }),
            }
        };
        let required = |name: &'static str| -> Result<String, CatalogError> {
            field(name)?.ok_or(CatalogError::MissingField { line: line_no, field: name })
        };
        let product = Product::from_fields(
            line_no,
            required("product_id")?,
            required("name")?,
            required("product_type")?,
            field("cohort")?,
        )?;
        out.push((line_no, product));
    }
    Ok(out)
}

/// Serializes a catalog in the same formats `read_catalog` accepts.
pub fn write_catalog<W: Write>(catalog: &Catalog, writer: W, format: CatalogFormat) -> Result<(), CatalogError> {
    let io = |source| CatalogError::Io {
        path: "<writer>".to_string(),
        source,
    };
    match format {
        CatalogFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(REQUIRED_FIELDS).map_err(|e| io(e.into()))?;
            for p in catalog.iter() {
                w.write_record([&p.product_id, &p.name, &p.product_type, &p.cohort])
                    .map_err(|e| io(e.into()))?;
            }
            w.flush().map_err(io)?;
        }
        CatalogFormat::Jsonl => {
            let mut w = writer;
            for p in catalog.iter() {
                let line = serde_json::to_string(p).expect("product serializes");
                writeln!(w, "{line}").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

/// Word-count summary of product names. `std_dev` is the population
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordCountStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: usize,
    pub max: usize,
    pub count: usize,
}

pub fn word_count_stats(catalog: &Catalog) -> Result<WordCountStats, CatalogError> {
    let counts: Vec<usize> = catalog.iter().map(Product::name_word_count).collect();
    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mean, std_dev) = mean_and_population_std(&as_f64).ok_or(CatalogError::Empty)?;
    Ok(WordCountStats {
        mean,
        std_dev,
        min: counts.iter().copied().min().unwrap_or(0),
        max: counts.iter().copied().max().unwrap_or(0),
        count: counts.len(),
    })
}

/// Uniform sample without replacement of `n` products of one type. The result
/// is a pure function of the arguments.
pub fn sample_items(
    catalog: &Catalog,
    product_type: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<Product>, CatalogError> {
    if n == 0 {
        return Err(CatalogError::ZeroSample);
    }
    let pool: Vec<&Product> = catalog.of_type(product_type).collect();
    if pool.len() < n {
        return Err(CatalogError::InsufficientItems {
            product_type: product_type.to_string(),
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}
