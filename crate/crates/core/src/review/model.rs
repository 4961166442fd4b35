use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ReviewError;
use crate::uncertainty::{MaskedNote, ReviewDecisions, ReviewStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    MaskVerification,
    ExplanationGrading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Open,
    NeedsAdjudication,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingPayload {
    pub note_id: String,
    pub note_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
    pub predicted_explanations: Vec<String>,
    pub ground_truth_explanations: Vec<String>,
    /// Hidden from reviewers while blinding is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReviewPayload {
    MaskVerification { masked_note: MaskedNote },
    ExplanationGrading(GradingPayload),
}

impl ReviewPayload {
    pub fn kind(&self) -> ItemKind {
        match self {
            ReviewPayload::MaskVerification { .. } => ItemKind::MaskVerification,
            ReviewPayload::ExplanationGrading(_) => ItemKind::ExplanationGrading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewItem {
    pub item_id: String,
    #[serde(flatten)]
    pub payload: ReviewPayload,
    /// When non-empty, only these reviewers may act on the item.
    #[serde(default)]
    pub assigned_reviewers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub item_id: String,
    pub reviewer_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeEvent {
    pub item_id: String,
    pub reviewer_id: String,
    pub correctness: u8,
    pub completeness: u8,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalGrade {
    pub correctness: u8,
    pub completeness: u8,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Enqueued(NewItem),
    Verification(VerificationEvent),
    Grade(GradeEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub kind: ItemKind,
    pub payload: ReviewPayload,
    pub status: ItemStatus,
    pub assigned_reviewers: Vec<String>,
    pub verification: Option<VerificationEvent>,
    pub grades: Vec<GradeEvent>,
    pub final_grade: Option<FinalGrade>,
}

/// What a reviewer sees: no model identity when blinded, and no prior
/// grades until the item closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub kind: ItemKind,
    pub status: ItemStatus,
    pub payload: ReviewPayload,
    pub assigned_reviewers: Vec<String>,
    pub grades_received: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grades: Vec<GradeEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_grade: Option<FinalGrade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub item_id: String,
    pub kind: ItemKind,
    pub status: ItemStatus,
    pub grades_received: usize,
}

impl ReviewItem {
    pub fn view(&self, blind: bool) -> ItemView {
        let mut payload = self.payload.clone();
        if let (true, ReviewPayload::ExplanationGrading(g)) = (blind, &mut payload) {
            g.model_id = None;
        }
        let closed = self.status == ItemStatus::Closed;
        ItemView {
            item_id: self.item_id.clone(),
            kind: self.kind,
            status: self.status,
            payload,
            assigned_reviewers: self.assigned_reviewers.clone(),
            grades_received: self.grades.len(),
            grades: if closed { self.grades.clone() } else { Vec::new() },
            final_grade: self.final_grade,
            verification: self.verification.clone(),
        }
    }

    pub fn summary(&self) -> ItemSummary {
        ItemSummary {
            item_id: self.item_id.clone(),
            kind: self.kind,
            status: self.status,
            grades_received: self.grades.len(),
        }
    }

    fn check_reviewer(&self, reviewer: &str) -> Result<(), ReviewError> {
        if reviewer.is_empty() {
            return Err(ReviewError::Validation("reviewer_id is empty".into()));
        }
        if !self.assigned_reviewers.is_empty() && !self.assigned_reviewers.iter().any(|r| r == reviewer) {
            return Err(ReviewError::Forbidden { reviewer: reviewer.into(), item: self.item_id.clone() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub kind: Option<ItemKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRow {
    pub item_id: String,
    pub correctness: u8,
    pub completeness: u8,
    pub reviewers: Vec<String>,
    pub adjudicated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub item_id: String,
    pub masked_note_id: String,
    pub decision: Decision,
    pub reviewer_id: String,
}

/// Counts per score 1-5 (index 0 is score 1) on each axis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub correctness: [usize; 5],
    pub completeness: [usize; 5],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradeTable {
    pub grades: Vec<GradeRow>,
    pub verifications: Vec<VerificationRow>,
    pub histogram: ScoreHistogram,
}

/// Materialized view of the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewState {
    items: BTreeMap<String, ReviewItem>,
}

fn check_score(axis: &str, v: u8) -> Result<(), ReviewError> {
    if (1..=5).contains(&v) {
        Ok(())
    } else {
        Err(ReviewError::Validation(format!("{axis} must be between 1 and 5, got {v}")))
    }
}

impl ReviewState {
    pub fn get(&self, id: &str) -> Option<&ReviewItem> {
        self.items.get(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    /// SHA-256 over the items in id order; equal states give equal digests.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for item in self.items.values() {
            h.update(serde_json::to_vec(item).expect("review items serialize"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Rejects any event that would break an invariant; `apply` trusts it.
    pub fn check(&self, event: &LogEvent) -> Result<(), ReviewError> {
        match event {
            LogEvent::Enqueued(new) => {
                if new.item_id.trim().is_empty() {
                    return Err(ReviewError::Validation("item_id is empty".into()));
                }
                if self.items.contains_key(&new.item_id) {
                    return Err(ReviewError::Conflict(format!("item {} already exists", new.item_id)));
                }
                if let ReviewPayload::MaskVerification { masked_note } = &new.payload {
                    masked_note.validate().map_err(|e| ReviewError::Validation(e.to_string()))?;
                }
                Ok(())
            }
            LogEvent::Verification(v) => {
                let item = self.items.get(&v.item_id).ok_or_else(|| ReviewError::NotFound(v.item_id.clone()))?;
                if item.kind != ItemKind::MaskVerification {
                    return Err(ReviewError::Validation(format!("item {} takes grades, not decisions", v.item_id)));
                }
                item.check_reviewer(&v.reviewer_id)?;
                if item.status == ItemStatus::Closed {
                    return Err(ReviewError::Conflict(format!("item {} already has a decision", v.item_id)));
                }
                Ok(())
            }
            LogEvent::Grade(g) => {
                let item = self.items.get(&g.item_id).ok_or_else(|| ReviewError::NotFound(g.item_id.clone()))?;
                if item.kind != ItemKind::ExplanationGrading {
                    return Err(ReviewError::Validation(format!("item {} takes a decision, not grades", g.item_id)));
                }
                check_score("correctness", g.correctness)?;
                check_score("completeness", g.completeness)?;
                item.check_reviewer(&g.reviewer_id)?;
                if item.status == ItemStatus::Closed {
                    return Err(ReviewError::Conflict(format!("item {} is closed", g.item_id)));
                }
                if item.grades.iter().any(|x| x.reviewer_id == g.reviewer_id) {
                    return Err(ReviewError::Conflict(format!(
                        "reviewer {} already graded item {}",
                        g.reviewer_id, g.item_id
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn apply(&mut self, event: LogEvent) -> Result<&ReviewItem, ReviewError> {
        self.check(&event)?;
        let id = match event {
            LogEvent::Enqueued(new) => {
                let id = new.item_id.clone();
                self.items.insert(
                    id.clone(),
                    ReviewItem {
                        item_id: new.item_id,
                        kind: new.payload.kind(),
                        payload: new.payload,
                        status: ItemStatus::Open,
                        assigned_reviewers: new.assigned_reviewers,
                        verification: None,
                        grades: Vec::new(),
                        final_grade: None,
                    },
                );
                id
            }
            LogEvent::Verification(v) => {
                let item = self.items.get_mut(&v.item_id).expect("checked");
                if let ReviewPayload::MaskVerification { masked_note } = &mut item.payload {
                    masked_note.review_status = match v.decision {
                        Decision::Approve => ReviewStatus::Approved,
                        Decision::Reject => ReviewStatus::Rejected,
                    };
                }
                item.status = ItemStatus::Closed;
                let id = v.item_id.clone();
                item.verification = Some(v);
                id
            }
            LogEvent::Grade(g) => {
                let item = self.items.get_mut(&g.item_id).expect("checked");
                let id = g.item_id.clone();
                item.grades.push(g);
                let grade = |e: &GradeEvent| FinalGrade { correctness: e.correctness, completeness: e.completeness };
                match item.grades.len() {
                    2 if grade(&item.grades[0]) == grade(&item.grades[1]) => {
                        item.status = ItemStatus::Closed;
                        item.final_grade = Some(grade(&item.grades[0]));
                    }
                    2 => item.status = ItemStatus::NeedsAdjudication,
                    3 => {
                        item.status = ItemStatus::Closed;
                        item.final_grade = Some(grade(&item.grades[2]));
                    }
                    _ => {}
                }
                id
            }
        };
        Ok(&self.items[&id])
    }

    /// Review status per masked note id, for corpus builds.
    pub fn review_decisions(&self) -> ReviewDecisions {
        self.items
            .values()
            .filter_map(|i| match &i.payload {
                ReviewPayload::MaskVerification { masked_note } => {
                    Some((masked_note.masked_note_id.clone(), masked_note.review_status))
                }
                _ => None,
            })
            .collect()
    }

    /// Final scores of closed items plus the per-axis score histogram.
    pub fn export(&self, filter: &ExportFilter) -> GradeTable {
        let mut table = GradeTable::default();
        let wanted = |k: ItemKind| filter.kind.is_none_or(|f| f == k);
        for item in self.items.values().filter(|i| i.status == ItemStatus::Closed && wanted(i.kind)) {
            match (&item.payload, item.final_grade, &item.verification) {
                (ReviewPayload::ExplanationGrading(_), Some(f), _) => {
                    table.histogram.correctness[f.correctness as usize - 1] += 1;
                    table.histogram.completeness[f.completeness as usize - 1] += 1;
                    table.grades.push(GradeRow {
                        item_id: item.item_id.clone(),
                        correctness: f.correctness,
                        completeness: f.completeness,
                        reviewers: item.grades.iter().map(|g| g.reviewer_id.clone()).collect(),
                        adjudicated: item.grades.len() == 3,
                    });
                }
                (ReviewPayload::MaskVerification { masked_note }, _, Some(v)) => {
                    table.verifications.push(VerificationRow {
                        item_id: item.item_id.clone(),
                        masked_note_id: masked_note.masked_note_id.clone(),
                        decision: v.decision,
                        reviewer_id: v.reviewer_id.clone(),
                    });
                }
                _ => {}
            }
        }
        table
    }
}
