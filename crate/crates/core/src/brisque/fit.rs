//! Moment-matching fits of generalized Gaussian (GGD) and asymmetric
//! generalized Gaussian (AGGD) distributions.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::gamma::gamma;
use super::BrisqueError;

pub const MIN_SAMPLES: usize = 100;
pub const SHAPE_MIN: f64 = 0.2;
pub const SHAPE_MAX: f64 = 10.0;
pub const SHAPE_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgdFit {
    pub alpha: f64,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggdFit {
    pub nu: f64,
    pub sigma_l_sq: f64,
    pub sigma_r_sq: f64,
    pub mean_feature: f64,
}

/// `ρ(a) = Γ(1/a) Γ(3/a) / Γ(2/a)²`, decreasing from ~1.6e3 at 0.2 to ~1.1
/// at 10.
pub fn shape_ratio(a: f64) -> f64 {
    let g2 = gamma(2.0 / a);
    gamma(1.0 / a) * gamma(3.0 / a) / (g2 * g2)
}

pub struct ShapeGrid {
    pub shapes: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Candidate shapes `0.2 + 0.001 k`, `k = 0..=9800`, with their ratios.
pub fn shape_grid() -> &'static ShapeGrid {
    static GRID: OnceLock<ShapeGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let n = ((SHAPE_MAX - SHAPE_MIN) / SHAPE_STEP).round() as usize;
        let shapes: Vec<f64> = (0..=n).map(|k| SHAPE_MIN + SHAPE_STEP * k as f64).collect();
        let ratios = shapes.iter().map(|&a| shape_ratio(a)).collect();
        ShapeGrid { shapes, ratios }
    })
}

/// First grid shape minimizing `|f(ρ(a)) − target|`.
fn grid_argmin(target: f64, f: impl Fn(f64) -> f64) -> f64 {
    let grid = shape_grid();
    let mut best = (f64::INFINITY, grid.shapes[0]);
    for (&a, &rho) in grid.shapes.iter().zip(&grid.ratios) {
        let d = (f(rho) - target).abs();
        if d < best.0 {
            best = (d, a);
        }
    }
    best.1
}

fn check_len(samples: &[f64]) -> Result<(), BrisqueError> {
    if samples.len() < MIN_SAMPLES {
        return Err(BrisqueError::TooFewSamples {
            got: samples.len(),
            min: MIN_SAMPLES,
        });
    }
    if let Some(&v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(BrisqueError::NonFinite(v));
    }
    Ok(())
}

pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit, BrisqueError> {
    check_len(samples)?;
    let n = samples.len() as f64;
    let sigma_sq = samples.iter().map(|x| x * x).sum::<f64>() / n;
    let mean_abs = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
    if mean_abs == 0.0 {
        return Err(BrisqueError::Degenerate);
    }
    // ρ(a) equals E[x²] / E[|x|]² for a GGD of shape a.
    let r = sigma_sq / (mean_abs * mean_abs);
    Ok(GgdFit {
        alpha: grid_argmin(r, |rho| rho),
        sigma_sq,
    })
}

pub fn fit_aggd(samples: &[f64]) -> Result<AggdFit, BrisqueError> {
    check_len(samples)?;
    let (mut neg_sq, mut n_neg, mut pos_sq, mut n_pos) = (0.0, 0usize, 0.0, 0usize);
    let (mut sum_abs, mut sum_sq) = (0.0, 0.0);
    for &x in samples {
        if x < 0.0 {
            neg_sq += x * x;
            n_neg += 1;
        } else if x > 0.0 {
            pos_sq += x * x;
            n_pos += 1;
        }
        sum_abs += x.abs();
        sum_sq += x * x;
    }
    if n_neg == 0 && n_pos == 0 {
        return Err(BrisqueError::Degenerate);
    }
    if n_neg == 0 || n_pos == 0 {
        return Err(BrisqueError::SingleSigned);
    }
    let sigma_l_sq = neg_sq / n_neg as f64;
    let sigma_r_sq = pos_sq / n_pos as f64;
    let (sl, sr) = (sigma_l_sq.sqrt(), sigma_r_sq.sqrt());
    let g = sl / sr;
    let n = samples.len() as f64;
    let mean_abs = sum_abs / n;
    let r_hat = mean_abs * mean_abs / (sum_sq / n);
    let r_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let nu = grid_argmin(r_norm, |rho| 1.0 / rho);
    let mean_feature = (sr - sl) * gamma(2.0 / nu) / gamma(1.0 / nu) * (gamma(1.0 / nu) / gamma(3.0 / nu)).sqrt();
    Ok(AggdFit {
        nu,
        sigma_l_sq,
        sigma_r_sq,
        mean_feature,
    })
}
