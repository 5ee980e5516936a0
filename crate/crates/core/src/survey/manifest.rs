//! Survey manifests: one task per product with its three strategy images,
//! shown to each rater in a per-rater shuffled slot order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SurveyError;
use crate::catalog::Product;
use crate::imagegen::GenerationRecord;
use crate::prompt::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyTask {
    pub product_id: String,
    pub product_name: String,
    pub images: BTreeMap<Strategy, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyManifest {
    pub seed: u64,
    pub tasks: Vec<SurveyTask>,
}

/// Builds one task per product. When the ledger holds several images for the
/// same (product, strategy), the last one wins.
pub fn create_survey(
    products: &[Product],
    records: &[GenerationRecord],
    seed: u64,
) -> Result<SurveyManifest, SurveyError> {
    let mut latest: BTreeMap<(&str, Strategy), &str> = BTreeMap::new();
    for r in records {
        latest.insert((r.product_id.as_str(), r.strategy), r.image_hash.as_str());
    }
    let mut tasks = Vec::with_capacity(products.len());
    for p in products {
        let mut images = BTreeMap::new();
        for s in Strategy::ALL {
            let hash = latest.get(&(p.product_id.as_str(), s)).ok_or_else(|| SurveyError::MissingImage {
                product_id: p.product_id.clone(),
                strategy: s,
            })?;
            images.insert(s, hash.to_string());
        }
        tasks.push(SurveyTask {
            product_id: p.product_id.clone(),
            product_name: p.name.clone(),
            images,
        });
    }
    Ok(SurveyManifest { seed, tasks })
}

/// Strategy shown in each slot for this rater and product.
pub fn slot_order(seed: u64, rater_id: &str, product_id: &str) -> [Strategy; 3] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(rater_id.as_bytes());
    h.update([0u8]);
    h.update(product_id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut order = Strategy::ALL;
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotImage {
    pub slot: u8,
    pub image_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterTask {
    pub product_id: String,
    pub product_name: String,
    pub slots: Vec<SlotImage>,
}

/// What a rater sees: no strategy names anywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterSurvey {
    pub rater_id: String,
    pub tasks: Vec<RaterTask>,
}

impl SurveyManifest {
    pub fn task(&self, product_id: &str) -> Option<&SurveyTask> {
        self.tasks.iter().find(|t| t.product_id == product_id)
    }

    pub fn rater_view(&self, rater_id: &str) -> RaterSurvey {
        let tasks = self
            .tasks
            .iter()
            .map(|t| RaterTask {
                product_id: t.product_id.clone(),
                product_name: t.product_name.clone(),
                slots: slot_order(self.seed, rater_id, &t.product_id)
                    .iter()
                    .enumerate()
                    .map(|(slot, s)| SlotImage {
                        slot: slot as u8,
                        image_hash: t.images[s].clone(),
                    })
                    .collect(),
            })
            .collect();
        RaterSurvey {
            rater_id: rater_id.to_string(),
            tasks,
        }
    }

    pub fn slot_strategy(&self, rater_id: &str, product_id: &str, slot: u8) -> Result<Strategy, SurveyError> {
        if self.task(product_id).is_none() {
            return Err(SurveyError::UnknownProduct(product_id.to_string()));
        }
        slot_order(self.seed, rater_id, product_id)
            .get(usize::from(slot))
            .copied()
            .ok_or(SurveyError::UnknownSlot(slot))
    }

    pub fn slot_of(&self, rater_id: &str, product_id: &str, strategy: Strategy) -> u8 {
        slot_order(self.seed, rater_id, product_id)
            .iter()
            .position(|&s| s == strategy)
            .expect("slot order is a permutation") as u8
    }

    pub fn image_count(&self) -> usize {
        self.tasks.iter().map(|t| t.images.len()).sum()
    }
}
