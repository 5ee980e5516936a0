//! Human evaluation: blinded survey manifests, the ratings ledger, score
//! aggregation and the survey HTTP service.

pub mod aggregate;
pub mod manifest;
pub mod server;
pub mod store;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::LedgerError;
use crate::prompt::Strategy;

pub use aggregate::{
    method_score, per_product_scores, render_score_table, survey_report, MethodScore, ProductScore, SurveyReport,
};
pub use manifest::{create_survey, slot_order, RaterSurvey, SurveyManifest, SurveyTask};
pub use server::{SurveyServer, SurveyState};
pub use store::RatingStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Low,
    Medium,
    High,
}

impl Rating {
    pub const ALL: [Rating; 3] = [Rating::Low, Rating::Medium, Rating::High];

    pub fn token(self) -> &'static str {
        match self {
            Rating::Low => "low",
            Rating::Medium => "medium",
            Rating::High => "high",
        }
    }

    /// The only place a rating becomes a number.
    pub fn value(self) -> u8 {
        match self {
            Rating::Low => 1,
            Rating::Medium => 2,
            Rating::High => 3,
        }
    }

    pub fn from_value(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.value() == v)
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Rating {
    type Err = SurveyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.token() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| SurveyError::InvalidRating(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub product_id: String,
    pub method: Strategy,
    pub rating: Rating,
    pub submitted_at: DateTime<Utc>,
}

impl RatingRecord {
    pub fn cell(&self) -> (&str, &str, Strategy) {
        (&self.rater_id, &self.product_id, self.method)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCell {
    pub rater_id: String,
    pub product_id: String,
}

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("invalid rating `{0}`; expected one of: low, medium, high")]
    InvalidRating(String),
    #[error("no ratings for method {0}")]
    NoRatings(Strategy),
    #[error("incomplete rating grid for method {method}: {} missing (rater, product) cells", missing.len())]
    IncompleteGrid { method: Strategy, missing: Vec<MissingCell> },
    #[error("product {product_id} has no {strategy} image in the generation ledger")]
    MissingImage { product_id: String, strategy: Strategy },
    #[error("unknown product {0}")]
    UnknownProduct(String),
    #[error("product {product_id} has no image for method {method}")]
    UnknownMethod { product_id: String, method: Strategy },
    #[error("method slot {0} outside 0..=2")]
    UnknownSlot(u8),
    #[error("rater id must not be empty")]
    EmptyRater,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_round_trips() {
        for r in Rating::ALL {
            assert_eq!(r.token().parse::<Rating>().unwrap(), r);
            assert_eq!(Rating::from_value(r.value()), Some(r));
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.token()));
        }
        let values: Vec<u8> = Rating::ALL.iter().map(|r| r.value()).collect();
        assert_eq!(values, vec![1, 2, 3]);
    }

    #[test]
    fn invalid_token_lists_legal_ones() {
        let e = "excellent".parse::<Rating>().unwrap_err();
        let msg = e.to_string();
        for t in ["low", "medium", "high"] {
            assert!(msg.contains(t), "{msg}");
        }
    }
}
