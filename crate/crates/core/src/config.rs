//! Run configuration: one JSON file, overridable per key by environment
//! variables `BANNERFORGE_<SECTION>_<KEY>` (e.g. `BANNERFORGE_TEXTGEN_BASE_URL`,
//! `BANNERFORGE_IMAGEGEN_DEFAULTS_WIDTH`, `BANNERFORGE_SANITIZE_MODE`).
//! Command-line flags are applied by the caller on top.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::extraction::{SanitizeMode, TextGenParams};
use crate::imagegen::{GenParams, ParamsError};
use crate::par::DEFAULT_THRESHOLD;
use crate::retry::RetryPolicy;

pub const ENV_PREFIX: &str = "BANNERFORGE_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextGenConfig {
    pub base_url: String,
    pub auth_header: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for TextGenConfig {
    fn default() -> Self {
        let p = TextGenParams::default();
        Self {
            base_url: "http://127.0.0.1:8001/generate".into(),
            auth_header: String::new(),
            temperature: p.temperature,
            max_tokens: p.max_tokens,
            seed: p.seed,
        }
    }
}

impl TextGenConfig {
    pub fn params(&self) -> TextGenParams {
        TextGenParams {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageGenConfig {
    pub base_url: String,
    pub auth_header: String,
    /// Recorded in every generation record; defaults to `base_url`.
    pub backend_id: Option<String>,
    pub defaults: GenParams,
    pub max_inflight: usize,
}

impl Default for ImageGenConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8002/txt2img".into(),
            auth_header: String::new(),
            backend_id: None,
            defaults: GenParams::default(),
            max_inflight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub base_url: String,
    pub auth_header: String,
    pub threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8003/detect".into(),
            auth_header: String::new(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub catalog: Option<PathBuf>,
    /// Extraction prompt template; the bundled one when unset.
    pub template: Option<PathBuf>,
    pub image_store: PathBuf,
    pub ledgers: PathBuf,
    pub svr_model: Option<PathBuf>,
    pub svr_range: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            template: None,
            image_store: PathBuf::from("out/images"),
            ledgers: PathBuf::from("out/ledgers"),
            svr_model: None,
            svr_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    pub seed: u64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self { seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub textgen: TextGenConfig,
    pub imagegen: ImageGenConfig,
    pub detector: DetectorConfig,
    pub paths: PathsConfig,
    pub sanitize_mode: SanitizeMode,
    pub prompt_suffix: String,
    pub retry: RetryPolicy,
    pub survey: SurveyConfig,
}

impl Config {
    /// Reads the file (defaults when `None`) and applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let config = Self::read_with_env(path, env)?;
        config.validate()?;
        Ok(config)
    }

    /// File plus environment overrides, without [`Config::validate`], for
    /// callers that layer further overrides on top.
    pub fn read_with_env(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let (mut tree, origin) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                let v: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                (v, p.display().to_string())
            }
            None => (Value::Object(Map::new()), "<defaults>".to_string()),
        };
        if !tree.is_object() {
            return Err(ConfigError::Parse {
                path: origin,
                message: "top level must be an object".into(),
            });
        }
        apply_env(&mut tree, env)?;
        serde_json::from_value(tree).map_err(|e| ConfigError::Parse {
            path: origin,
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.imagegen.max_inflight == 0 {
            return Err(ConfigError::Invalid("imagegen.max_inflight must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.detector.threshold) {
            return Err(ConfigError::Invalid("detector.threshold must be in [0, 1]".into()));
        }
        if !self.textgen.temperature.is_finite() || self.textgen.temperature < 0.0 {
            return Err(ConfigError::Invalid("textgen.temperature must be a non-negative number".into()));
        }
        self.imagegen.defaults.validate()?;
        Ok(())
    }
}

/// Finds the key path for `rest` (e.g. `imagegen_defaults_width`) in the
/// shape of the default configuration.
fn resolve<'a>(schema: &'a Value, rest: &str) -> Option<(Vec<String>, &'a Value)> {
    let obj = schema.as_object()?;
    if let Some(leaf) = obj.get(rest) {
        return Some((vec![rest.to_string()], leaf));
    }
    obj.iter()
        .filter(|(k, v)| v.is_object() && rest.starts_with(&format!("{k}_")))
        .find_map(|(k, v)| {
            let (mut path, leaf) = resolve(v, &rest[k.len() + 1..])?;
            path.insert(0, k.clone());
            Some((path, leaf))
        })
}

fn apply_env(tree: &mut Value, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let schema = serde_json::to_value(Config::default()).expect("default config serializes");
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let rest = key[ENV_PREFIX.len()..].to_ascii_lowercase();
        let Some((path, leaf)) = resolve(&schema, &rest) else {
            log::warn!("ignoring {key}: no such config key");
            continue;
        };
        let value = if leaf.is_string() {
            Value::String(raw)
        } else {
            serde_json::from_str(&raw).unwrap_or(Value::String(raw))
        };
        let mut node = &mut *tree;
        for (i, part) in path.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| ConfigError::Parse {
                path: key.clone(),
                message: format!("`{}` is not an object", path[..i].join(".")),
            })?;
            if i + 1 == path.len() {
                obj.insert(part.clone(), value);
                break;
            }
            node = obj.entry(part.clone()).or_insert_with(|| Value::Object(Map::new()));
        }
    }
    Ok(())
}
