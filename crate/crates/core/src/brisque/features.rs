//! The 36-component BRISQUE feature vector.

use serde::{Deserialize, Serialize};

use super::fit::{fit_aggd, fit_ggd};
use super::image::{GrayImage, Plane};
use super::mscn::{mscn_of_plane, paired_products};
use super::BrisqueError;

pub const FEATURE_COUNT: usize = 36;
pub const FEATURES_PER_SCALE: usize = 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BrisqueFeatureVector {
    values: [f64; FEATURE_COUNT],
}

impl BrisqueFeatureVector {
    pub fn new(values: [f64; FEATURE_COUNT]) -> Result<Self, BrisqueError> {
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(BrisqueError::NonFinite(v));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for BrisqueFeatureVector {
    type Error = BrisqueError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let len = v.len();
        let values: [f64; FEATURE_COUNT] = v
            .try_into()
            .map_err(|_| BrisqueError::FeatureCount(len))?;
        Self::new(values)
    }
}

impl From<BrisqueFeatureVector> for Vec<f64> {
    fn from(f: BrisqueFeatureVector) -> Self {
        f.values.to_vec()
    }
}

/// `[alpha, sigma_sq]` then `[nu, mean, σl², σr²]` for each orientation.
pub fn scale_features(plane: &Plane) -> Result<[f64; FEATURES_PER_SCALE], BrisqueError> {
    let mscn = mscn_of_plane(plane);
    let mut out = [0.0; FEATURES_PER_SCALE];
    let ggd = fit_ggd(&mscn.data)?;
    out[0] = ggd.alpha;
    out[1] = ggd.sigma_sq;
    let products = paired_products(&mscn);
    for (k, p) in products.in_feature_order().into_iter().enumerate() {
        let a = fit_aggd(&p.data)?;
        out[2 + 4 * k..6 + 4 * k].copy_from_slice(&[a.nu, a.mean_feature, a.sigma_l_sq, a.sigma_r_sq]);
    }
    Ok(out)
}

pub fn brisque_features(gray: &GrayImage) -> Result<BrisqueFeatureVector, BrisqueError> {
    let fine = gray.plane();
    let coarse = fine.downscale_half();
    let mut values = [0.0; FEATURE_COUNT];
    values[..FEATURES_PER_SCALE].copy_from_slice(&scale_features(fine)?);
    values[FEATURES_PER_SCALE..].copy_from_slice(&scale_features(&coarse)?);
    BrisqueFeatureVector::new(values)
}
