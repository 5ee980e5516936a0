//! Item-to-user mapping by cohort affinity.
//!
//! Among a user's candidate items, the one whose cohort carries the user's
//! highest affinity wins. Ties on score go to the lexicographically smallest
//! cohort, then the smallest product id. If no candidate's cohort is known to
//! the user, the smallest product id is chosen with affinity 0.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Product;
use crate::ledger::{read_jsonl, LedgerError};

#[derive(Debug, Error)]
pub enum PersonalizationError {
    #[error("no candidate items")]
    NoCandidates,
    #[error("user {0} has no affinities")]
    NoAffinities(String),
    #[error("user {user_id}: affinity for cohort `{cohort}` is not finite")]
    NonFinite { user_id: String, cohort: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAffinities {
    pub user_id: String,
    pub affinities: BTreeMap<String, f64>,
}

impl UserAffinities {
    pub fn validate(&self) -> Result<(), PersonalizationError> {
        if self.affinities.is_empty() {
            return Err(PersonalizationError::NoAffinities(self.user_id.clone()));
        }
        if let Some((cohort, _)) = self.affinities.iter().find(|(_, s)| !s.is_finite()) {
            return Err(PersonalizationError::NonFinite {
                user_id: self.user_id.clone(),
                cohort: cohort.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub user_id: String,
    pub product_id: String,
    pub cohort: String,
    pub affinity_used: f64,
}

pub fn select_item(user: &UserAffinities, candidates: &[Product]) -> Result<Selection, PersonalizationError> {
    user.validate()?;
    // Ordering: higher score first, then smaller cohort, then smaller id.
    let better = |a: (&Product, f64), b: (&Product, f64)| -> bool {
        match a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (&a.0.cohort, &a.0.product_id) < (&b.0.cohort, &b.0.product_id),
        }
    };

    let mut best: Option<(&Product, f64)> = None;
    for product in candidates {
        if let Some(&score) = user.affinities.get(&product.cohort) {
            if best.is_none_or(|b| better((product, score), b)) {
                best = Some((product, score));
            }
        }
    }

    let (product, affinity_used) = match best {
        Some(hit) => hit,
        None => {
            let fallback = candidates
                .iter()
                .min_by(|a, b| a.product_id.cmp(&b.product_id))
                .ok_or(PersonalizationError::NoCandidates)?;
            (fallback, 0.0)
        }
    };
    Ok(Selection {
        user_id: user.user_id.clone(),
        product_id: product.product_id.clone(),
        cohort: product.cohort.clone(),
        affinity_used,
    })
}

/// Reads `affinities.jsonl` (`{"user_id": ..., "affinities": {cohort: score}}`
/// per line) and validates every entry.
pub fn read_affinities(path: impl AsRef<Path>) -> Result<Vec<UserAffinities>, PersonalizationError> {
    let users: Vec<UserAffinities> = read_jsonl(path)?;
    for u in &users {
        u.validate()?;
    }
    Ok(users)
}
