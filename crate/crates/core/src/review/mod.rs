//! Expert review: verification of masked notes and 5-point grading of
//! explanations with third-reviewer adjudication.
//!
//! State is a pure fold over an append-only NDJSON event log
//! ([`ReviewStore`]); [`http::router`] exposes it over HTTP.

pub mod http;
mod model;
mod store;

use std::path::PathBuf;

pub use http::{router, serve_blocking, ReviewerEntry, ReviewerRegistry, ServiceState};
pub use model::{
    Decision, ExportFilter, FinalGrade, GradeEvent, GradeRow, GradeTable, GradingPayload, ItemKind, ItemStatus,
    ItemSummary, ItemView, LogEvent, NewItem, ReviewItem, ReviewPayload, ReviewState, ScoreHistogram,
    VerificationEvent, VerificationRow,
};
pub use store::ReviewStore;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("item {0} not found")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid: {0}")]
    Validation(String),
    #[error("reviewer {reviewer} is not assigned to item {item}")]
    Forbidden { reviewer: String, item: String },
    #[error("unknown or missing reviewer token")]
    Unauthorized,
    #[error("event log {path} line {line}: {detail}")]
    CorruptLog { path: PathBuf, line: usize, detail: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Maps the share of ground-truth explanations a prediction recovered to a
/// 1-5 grade: uniform quintiles, with 0.8 itself in band 4 so that only
/// "over 80%" earns a 5.
pub fn score_band(fraction: f64) -> Result<u8, ReviewError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ReviewError::Validation(format!("fraction {fraction} is outside [0, 1]")));
    }
    Ok(match fraction {
        f if f < 0.2 => 1,
        f if f < 0.4 => 2,
        f if f < 0.6 => 3,
        f if f <= 0.8 => 4,
        _ => 5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn band_boundaries() {
        assert_eq!(score_band(0.85).unwrap(), 5);
        assert_eq!(score_band(0.15).unwrap(), 1);
        assert_eq!(score_band(0.80).unwrap(), 4);
        assert_eq!(score_band(0.2).unwrap(), 2);
        assert_eq!(score_band(0.0).unwrap(), 1);
        assert_eq!(score_band(1.0).unwrap(), 5);
        assert!(score_band(1.01).is_err());
        assert!(score_band(-0.1).is_err());
        assert!(score_band(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn bands_are_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(score_band(lo).unwrap() <= score_band(hi).unwrap());
            if hi > 0.8 { prop_assert_eq!(score_band(hi).unwrap(), 5); }
            if lo < 0.2 { prop_assert_eq!(score_band(lo).unwrap(), 1); }
        }
    }
}
