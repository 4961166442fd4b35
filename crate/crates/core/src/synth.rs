//! Synthetic criteria and clinical notes with known evidence spans.
//!
//! Notes are a shuffled mix of filler sentences and evidence sentences. Each
//! criterion has its own evidence vocabulary and every note draws fresh
//! values, so a quote never occurs twice in a note. With `shared_sentences`
//! some notes pack two evidence clauses into one sentence, which exercises
//! the masking skip rule.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::annotation::{AnnotatedNote, EvidenceSpan};
use crate::data::{
    CriteriaSet, Criterion, CriterionCategory, Disease, NoteRecord, NoteSource, Requirement,
    Specialty,
};
use crate::rng::derived_rng;

const DISEASES: &[(&str, &str, Specialty)] = &[
    ("acute_liver_failure", "Acute liver failure", Specialty::Hepatology),
    ("type_1_diabetes", "Type 1 diabetes mellitus", Specialty::Endocrinology),
    ("acute_myocardial_infarction", "Acute myocardial infarction", Specialty::Cardiology),
    ("diabetic_ketoacidosis", "Diabetic ketoacidosis", Specialty::Endocrinology),
    ("heart_failure", "Heart failure", Specialty::Cardiology),
    ("atrial_fibrillation", "Atrial fibrillation", Specialty::Cardiology),
    ("hyperthyroidism", "Hyperthyroidism", Specialty::Endocrinology),
    ("hypothyroidism", "Hypothyroidism", Specialty::Endocrinology),
    ("cirrhosis", "Cirrhosis", Specialty::Hepatology),
    ("takotsubo_syndrome", "Takotsubo syndrome", Specialty::Cardiology),
    ("hepatitis_b", "Chronic hepatitis B", Specialty::Hepatology),
    ("hyperkalemia", "Hyperkalemia", Specialty::Other),
];

const ANALYTES: &[&str] = &[
    "INR", "HCO3", "Troponin", "Glucose", "HbA1c", "TSH", "FreeT4", "BNP", "ALT", "AST",
    "Lactate", "Potassium", "Bilirubin", "Albumin", "Creatinine", "Ketones", "HBsAg", "Platelets",
];
const SYMPTOMS: &[&str] = &[
    "chest pain", "polyuria", "polydipsia", "dyspnea", "palpitations", "fatigue", "tremor",
    "jaundice", "confusion", "weight loss", "orthopnea", "abdominal pain", "nausea",
];
const HISTORY: &[&str] = &[
    "hypertension", "autoimmune thyroiditis", "alcohol use", "coronary disease", "obesity",
    "hepatitis exposure", "insulin therapy", "emotional stressor",
];
const IMAGING: &[(&str, &str)] = &[
    ("Head CT", "diffuse cerebral edema"),
    ("Echocardiogram", "apical ballooning"),
    ("Chest X-ray", "pulmonary congestion"),
    ("Abdominal ultrasound", "nodular liver contour"),
    ("ECG", "ST elevation in leads II, III and aVF"),
    ("Thyroid ultrasound", "diffuse goiter"),
];
const FILLER: &[&str] = &[
    "The patient was admitted through the emergency department",
    "Vital signs were monitored overnight",
    "Family was updated at the bedside",
    "Physical therapy evaluated mobility on day two",
    "Diet was advanced as tolerated",
    "Social work assisted with discharge planning",
    "Medication reconciliation was completed",
    "The patient ambulated in the hallway without assistance",
    "Code status was confirmed as full code",
    "Follow-up was arranged with the primary care physician",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub diseases: usize,
    pub notes_per_disease: usize,
    /// Filler sentences per note are drawn from `0..=max_filler`.
    pub max_filler: usize,
    /// Probability that two evidence clauses share one sentence.
    pub shared_sentences: f64,
    /// Probability of separating sentences with a newline instead of a space.
    pub newline_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            diseases: 4,
            notes_per_disease: 10,
            max_filler: 4,
            shared_sentences: 0.0,
            newline_rate: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub criteria: CriteriaSet,
    pub notes: Vec<NoteRecord>,
    /// Every note, fully annotated and evidence-complete.
    pub annotated: Vec<AnnotatedNote>,
}

#[derive(Debug, Clone, Copy)]
enum Vocab {
    Lab(&'static str),
    Symptom(&'static str),
    History(&'static str),
    Imaging(&'static str, &'static str),
    Onset,
}

fn vocab(disease: usize, j: usize) -> (CriterionCategory, Vocab) {
    let k = disease * 7 + j * 3;
    match j % 5 {
        0 => (CriterionCategory::Laboratory, Vocab::Lab(ANALYTES[k % ANALYTES.len()])),
        1 => (CriterionCategory::Symptom, Vocab::Symptom(SYMPTOMS[k % SYMPTOMS.len()])),
        2 => (CriterionCategory::Laboratory, Vocab::Lab(ANALYTES[(k + 5) % ANALYTES.len()])),
        3 => (CriterionCategory::History, Vocab::History(HISTORY[k % HISTORY.len()])),
        _ => {
            if disease.is_multiple_of(2) {
                let (m, f) = IMAGING[k % IMAGING.len()];
                (CriterionCategory::Imaging, Vocab::Imaging(m, f))
            } else {
                (CriterionCategory::Temporal, Vocab::Onset)
            }
        }
    }
}

fn rule_text(v: Vocab) -> String {
    match v {
        Vocab::Lab(a) => format!("{a} outside the reference range"),
        Vocab::Symptom(s) => format!("Presence of {s}"),
        Vocab::History(h) => format!("Documented history of {h}"),
        Vocab::Imaging(m, f) => format!("{m} demonstrating {f}"),
        Vocab::Onset => "Symptom onset within the last 26 weeks".into(),
    }
}

fn evidence(v: Vocab, rng: &mut ChaCha8Rng) -> (String, String) {
    match v {
        Vocab::Lab(a) => {
            let value = format!("{}.{}", rng.random_range(1..400), rng.random_range(0..10));
            ("Labs were notable for".into(), format!("{a}-{value}"))
        }
        Vocab::Symptom(s) => (
            "On presentation the patient".into(),
            format!("reported {s} for {} days", rng.random_range(2..60)),
        ),
        Vocab::History(h) => (
            "Past medical history is significant for".into(),
            format!("{h} diagnosed in {}", rng.random_range(1970..2020)),
        ),
        Vocab::Imaging(m, f) => (
            String::new(),
            format!("{m} on day {} showed {f}", rng.random_range(1..9)),
        ),
        Vocab::Onset => (
            "The patient".into(),
            format!("developed the symptoms for less than {} weeks", rng.random_range(2..26)),
        ),
    }
}

fn criteria_count(disease: usize) -> usize {
    3 + disease % 3
}

/// Criteria for `n` diseases; diseases with five criteria put the last two
/// in an `any_of` group.
pub fn criteria_set(n: usize) -> CriteriaSet {
    let mut diseases = Vec::new();
    let mut criteria = Vec::new();
    for i in 0..n {
        let (id, name, specialty) = match DISEASES.get(i) {
            Some(&(id, name, sp)) => (id.to_string(), name.to_string(), sp),
            None => (format!("disease_{i}"), format!("Synthetic disease {i}"), Specialty::Other),
        };
        let count = criteria_count(i);
        for j in 0..count {
            let (category, v) = vocab(i, j);
            let requirement = if count == 5 && j >= 3 {
                Requirement::AnyOf("g1".into())
            } else {
                Requirement::Required
            };
            criteria.push(Criterion {
                criterion_id: format!("{id}_c{j}"),
                disease_id: id.clone(),
                text: rule_text(v),
                category,
                requirement,
            });
        }
        diseases.push(Disease { disease_id: id, display_name: name, specialty });
    }
    CriteriaSet::new("synthetic-1", diseases, criteria).expect("synthetic criteria are valid")
}

/// Acute liver failure with four required criteria.
pub fn liver_failure_criteria() -> CriteriaSet {
    let c = |id: &str, text: &str, category| Criterion {
        criterion_id: id.into(),
        disease_id: "acute_liver_failure".into(),
        text: text.into(),
        category,
        requirement: Requirement::Required,
    };
    CriteriaSet::new(
        "alf-1",
        vec![Disease {
            disease_id: "acute_liver_failure".into(),
            display_name: "Acute liver failure".into(),
            specialty: Specialty::Hepatology,
        }],
        vec![
            c("alf_onset", "Illness duration of less than 26 weeks", CriterionCategory::Temporal),
            c("alf_enceph", "Hepatic encephalopathy or cerebral edema", CriterionCategory::Imaging),
            c("alf_inr", "INR ≥ 1.5", CriterionCategory::Laboratory),
            c("alf_no_cirrhosis", "No prior history of cirrhosis", CriterionCategory::History),
        ],
    )
    .expect("valid")
}

impl SyntheticCorpus {
    pub fn generate(config: &SynthConfig) -> Self {
        let criteria = criteria_set(config.diseases);
        let mut rng = derived_rng(config.seed, "synth/notes");
        let mut notes = Vec::new();
        let mut annotated = Vec::new();
        for (i, disease) in criteria.diseases().iter().enumerate() {
            let rules: Vec<&Criterion> = criteria.criteria_for(&disease.disease_id).collect();
            for k in 0..config.notes_per_disease {
                let note_id = format!("{}-{k:05}", disease.disease_id);
                let (text, spans) = compose_note(i, &rules, config, &mut rng);
                let note = NoteRecord::new(note_id, text, &disease.disease_id, NoteSource::Synthetic);
                let a = AnnotatedNote::from_spans(note.clone(), spans, &criteria)
                    .expect("synthetic spans are valid");
                notes.push(note);
                annotated.push(a);
            }
        }
        Self { criteria, notes, annotated }
    }
}

enum Piece {
    Filler(&'static str),
    Evidence(Vec<(String, String, String)>), // (criterion_id, lead, quote)
}

fn compose_note(
    disease: usize,
    rules: &[&Criterion],
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> (String, Vec<EvidenceSpan>) {
    let mut clauses: Vec<(String, String, String)> = rules
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let (_, v) = vocab(disease, j);
            let (lead, quote) = evidence(v, rng);
            (c.criterion_id.clone(), lead, quote)
        })
        .collect();
    clauses.shuffle(rng);

    let mut pieces = Vec::new();
    while let Some(first) = clauses.pop() {
        let mut group = vec![first];
        if !clauses.is_empty() && rng.random_bool(config.shared_sentences) {
            group.push(clauses.pop().expect("non-empty"));
        }
        pieces.push(Piece::Evidence(group));
    }
    for _ in 0..rng.random_range(0..=config.max_filler) {
        pieces.push(Piece::Filler(FILLER[rng.random_range(0..FILLER.len())]));
    }
    pieces.shuffle(rng);

    let mut text = String::new();
    let mut spans = Vec::new();
    for (idx, piece) in pieces.iter().enumerate() {
        if idx > 0 {
            text.push(if rng.random_bool(config.newline_rate) { '\n' } else { ' ' });
        }
        match piece {
            Piece::Filler(s) => {
                text.push_str(s);
            }
            Piece::Evidence(group) => {
                for (g, (criterion_id, lead, quote)) in group.iter().enumerate() {
                    if g > 0 {
                        text.push_str(", and ");
                    }
                    if !lead.is_empty() {
                        text.push_str(lead);
                        text.push(' ');
                    }
                    let start = text.chars().count();
                    text.push_str(quote);
                    spans.push(EvidenceSpan {
                        criterion_id: criterion_id.clone(),
                        start,
                        end: start + quote.chars().count(),
                        quote: quote.clone(),
                    });
                }
            }
        }
        text.push('.');
    }
    (text, spans)
}
