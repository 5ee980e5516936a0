//! Append-only ratings ledger. Resubmissions are appended; the latest one is
//! effective and earlier ones stay as the audit trail.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use chrono::Utc;

use super::manifest::SurveyManifest;
use super::{Rating, RatingRecord, SurveyError};
use crate::ledger::JsonlLedger;
use crate::prompt::Strategy;

pub struct RatingStore {
    ledger: JsonlLedger<RatingRecord>,
    // Serializes validate-append-count so audit counts are consistent.
    writer: Mutex<()>,
}

impl RatingStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SurveyError> {
        Ok(Self {
            ledger: JsonlLedger::open(path)?,
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> &Path {
        self.ledger.path()
    }

    /// Validates against the manifest, appends, and returns how many
    /// submissions the (rater, product, method) cell now has.
    pub fn record_rating(&self, manifest: &SurveyManifest, record: &RatingRecord) -> Result<usize, SurveyError> {
        if record.rater_id.trim().is_empty() {
            return Err(SurveyError::EmptyRater);
        }
        let task = manifest
            .task(&record.product_id)
            .ok_or_else(|| SurveyError::UnknownProduct(record.product_id.clone()))?;
        if !task.images.contains_key(&record.method) {
            return Err(SurveyError::UnknownMethod {
                product_id: record.product_id.clone(),
                method: record.method,
            });
        }
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        self.ledger.append(record)?;
        let all = self.ledger.read_all()?;
        Ok(all.iter().filter(|r| r.cell() == record.cell()).count())
    }

    /// Convenience for slot-addressed submissions from the survey UI.
    pub fn record_slot(
        &self,
        manifest: &SurveyManifest,
        rater_id: &str,
        product_id: &str,
        slot: u8,
        rating: Rating,
    ) -> Result<usize, SurveyError> {
        let method = manifest.slot_strategy(rater_id, product_id, slot)?;
        self.record_rating(
            manifest,
            &RatingRecord {
                rater_id: rater_id.to_string(),
                product_id: product_id.to_string(),
                method,
                rating,
                submitted_at: Utc::now(),
            },
        )
    }

    /// Every submission, in ledger order.
    pub fn all(&self) -> Result<Vec<RatingRecord>, SurveyError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        Ok(self.ledger.read_all()?)
    }

    pub fn effective(&self) -> Result<Vec<RatingRecord>, SurveyError> {
        Ok(effective_ratings(&self.all()?))
    }

    pub fn audit_count(&self, rater_id: &str, product_id: &str, method: Strategy) -> Result<usize, SurveyError> {
        Ok(self
            .all()?
            .iter()
            .filter(|r| r.cell() == (rater_id, product_id, method))
            .count())
    }
}

/// One record per (rater, product, method): the latest by `submitted_at`,
/// later position winning ties. Output is sorted by cell.
pub fn effective_ratings(records: &[RatingRecord]) -> Vec<RatingRecord> {
    let mut latest: BTreeMap<(&str, &str, Strategy), &RatingRecord> = BTreeMap::new();
    for r in records {
        match latest.get(&r.cell()) {
            Some(prev) if prev.submitted_at > r.submitted_at => {}
            _ => {
                latest.insert(r.cell(), r);
            }
        }
    }
    latest.into_values().cloned().collect()
}
