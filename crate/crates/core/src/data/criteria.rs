//! Diagnostic criteria registry.
//!
//! A criteria file is line-delimited JSON. The first record is a header
//! carrying `{version, diseases[]}`; every following record is one
//! [`Criterion`]. A disease is only admitted when it has at least two
//! criteria, and `any_of` groups need at least two members, otherwise the
//! group is indistinguishable from a required criterion.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionCategory {
    Symptom,
    Laboratory,
    History,
    Imaging,
    Temporal,
}

/// Whether a criterion must hold on its own or is one alternative of a group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    Required,
    AnyOf(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criterion {
    pub criterion_id: String,
    pub disease_id: String,
    pub text: String,
    pub category: CriterionCategory,
    pub requirement: Requirement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specialty {
    Endocrinology,
    Cardiology,
    Hepatology,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disease {
    pub disease_id: String,
    pub display_name: String,
    pub specialty: Specialty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CriteriaHeader {
    version: String,
    diseases: Vec<Disease>,
}

/// Validated set of diseases and their diagnostic criteria.
///
/// Construct through [`CriteriaSet::new`] or [`load_criteria`]; both enforce
/// every invariant, so holders of a `CriteriaSet` can rely on them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriteriaSet {
    version: String,
    diseases: Vec<Disease>,
    criteria: Vec<Criterion>,
    by_id: HashMap<String, usize>,
}

impl CriteriaSet {
    pub fn new(
        version: impl Into<String>,
        diseases: Vec<Disease>,
        criteria: Vec<Criterion>,
    ) -> Result<Self, DataError> {
        let mut disease_ids = HashSet::new();
        for d in &diseases {
            if d.disease_id.is_empty() {
                return Err(DataError::schema("disease_id", "empty disease id"));
            }
            if !disease_ids.insert(d.disease_id.as_str()) {
                return Err(DataError::DuplicateId(d.disease_id.clone()));
            }
        }

        let mut by_id = HashMap::new();
        let mut per_disease: HashMap<&str, usize> = HashMap::new();
        let mut groups: HashMap<(&str, &str), usize> = HashMap::new();
        for (idx, c) in criteria.iter().enumerate() {
            if c.criterion_id.is_empty() {
                return Err(DataError::schema("criterion_id", "empty criterion id"));
            }
            if c.text.trim().is_empty() {
                return Err(DataError::schema(
                    "text",
                    format!("criterion {} has empty text", c.criterion_id),
                ));
            }
            if by_id.insert(c.criterion_id.clone(), idx).is_some() {
                return Err(DataError::DuplicateId(c.criterion_id.clone()));
            }
            if !disease_ids.contains(c.disease_id.as_str()) {
                return Err(DataError::schema(
                    "disease_id",
                    format!(
                        "criterion {} references unknown disease {}",
                        c.criterion_id, c.disease_id
                    ),
                ));
            }
            *per_disease.entry(c.disease_id.as_str()).or_default() += 1;
            if let Requirement::AnyOf(group) = &c.requirement {
                *groups.entry((c.disease_id.as_str(), group.as_str())).or_default() += 1;
            }
        }

        if let Some(((disease, group), _)) = groups.iter().find(|(_, n)| **n < 2) {
            return Err(DataError::schema(
                "requirement",
                format!("any_of group {group} of disease {disease} has a single member"),
            ));
        }

        for d in &diseases {
            let count = per_disease.get(d.disease_id.as_str()).copied().unwrap_or(0);
            if count < 2 {
                return Err(DataError::TooFewRules {
                    disease_id: d.disease_id.clone(),
                    count,
                });
            }
        }

        Ok(Self {
            version: version.into(),
            diseases,
            criteria,
            by_id,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn diseases(&self) -> &[Disease] {
        &self.diseases
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn disease(&self, disease_id: &str) -> Option<&Disease> {
        self.diseases.iter().find(|d| d.disease_id == disease_id)
    }

    pub fn criterion(&self, criterion_id: &str) -> Option<&Criterion> {
        self.by_id.get(criterion_id).map(|&i| &self.criteria[i])
    }

    /// Criteria of one disease in file order.
    pub fn criteria_for<'a>(&'a self, disease_id: &'a str) -> impl Iterator<Item = &'a Criterion> + 'a {
        self.criteria.iter().filter(move |c| c.disease_id == disease_id)
    }

    /// True when `satisfied` covers every required criterion of the disease
    /// and at least one member of each of its `any_of` groups.
    pub fn is_sufficient(&self, disease_id: &str, satisfied: &BTreeSet<String>) -> bool {
        let mut groups: BTreeMap<&str, bool> = BTreeMap::new();
        let mut any = false;
        for c in self.criteria_for(disease_id) {
            any = true;
            let hit = satisfied.contains(&c.criterion_id);
            match &c.requirement {
                Requirement::Required if !hit => return false,
                Requirement::Required => {}
                Requirement::AnyOf(g) => *groups.entry(g.as_str()).or_default() |= hit,
            }
        }
        any && groups.values().all(|&hit| hit)
    }
}

pub fn load_criteria(path: &Path) -> Result<CriteriaSet, DataError> {
    let lines = jsonl::read_lines(path)?;
    let mut iter = lines.into_iter();
    let (line, header_text) = iter
        .next()
        .ok_or_else(|| DataError::schema("version", "criteria file is empty"))?;
    let header: CriteriaHeader =
        serde_json::from_str(&header_text).map_err(|e| parse_error(path, line, e))?;
    let criteria = iter
        .map(|(line, text)| serde_json::from_str::<Criterion>(&text).map_err(|e| parse_error(path, line, e)))
        .collect::<Result<Vec<_>, _>>()?;
    CriteriaSet::new(header.version, header.diseases, criteria)
}

pub fn save_criteria(set: &CriteriaSet, path: &Path) -> Result<(), DataError> {
    let io = |e| DataError::from(JsonlError::io(path, e));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header = CriteriaHeader {
        version: set.version.clone(),
        diseases: set.diseases.clone(),
    };
    let mut lines = vec![serde_json::to_string(&header).expect("header serializes")];
    lines.extend(
        set.criteria
            .iter()
            .map(|c| serde_json::to_string(c).expect("criterion serializes")),
    );
    for l in lines {
        writeln!(w, "{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn parse_error(path: &Path, line: usize, e: serde_json::Error) -> DataError {
    DataError::Schema {
        field: field_from_serde(&e.to_string()),
        message: format!("{}:{line}: {e}", path.display()),
    }
}

// serde_json messages name the field as `missing field `x`` or `unknown field `x``.
fn field_from_serde(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("record").to_string()
}
