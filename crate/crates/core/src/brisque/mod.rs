//! BRISQUE no-reference image quality: MSCN normalization, GGD/AGGD fits
//! over two scales, and SVR scoring. Lower scores are better.

pub mod features;
pub mod fit;
pub mod gamma;
pub mod image;
pub mod mscn;
pub mod svr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::image::{to_luminance, GrayImage, Plane};
pub use features::{brisque_features, BrisqueFeatureVector, FEATURE_COUNT};
pub use fit::{fit_aggd, fit_ggd, AggdFit, GgdFit};
pub use mscn::{compute_mscn, paired_products, PairedProducts};
pub use svr::{brisque_score, parse_svr_model, SvrModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BrisqueError {
    #[error("image is {width}x{height}; both sides must be at least 16")]
    TooSmall { width: usize, height: usize },
    #[error("expected {expected} pixels, got {got}")]
    PixelCount { expected: usize, got: usize },
    #[error("pixel value {0} outside [0, 255]")]
    PixelRange(f64),
    #[error("cannot decode PNG: {0}")]
    Decode(String),
    #[error("fit needs at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("all samples are zero")]
    Degenerate,
    #[error("samples have a single sign")]
    SingleSigned,
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("expected 36 features, got {0}")]
    FeatureCount(usize),
    #[error("model file line {line}: {message}")]
    Model { line: usize, message: String },
    #[error("range file line {line}: {message}")]
    Range { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no scores to summarize")]
    NoScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

/// Arithmetic mean and population standard deviation.
pub fn summarize_scores(scores: &[f64]) -> Result<ScoreSummary, BrisqueError> {
    let (mean, std_dev) = crate::stats::mean_and_population_std(scores).ok_or(BrisqueError::NoScores)?;
    Ok(ScoreSummary {
        mean,
        std_dev,
        n: scores.len(),
    })
}

/// Decodes a PNG and scores it.
pub fn score_png(png: &[u8], model: &SvrModel) -> Result<(BrisqueFeatureVector, f64), BrisqueError> {
    let features = brisque_features(&to_luminance(png)?)?;
    let score = brisque_score(&features, model);
    Ok((features, score))
}
