use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Subtask, TaskgenError};

pub const NOTE_PLACEHOLDER: &str = "{{note}}";

const DEFAULT_DD: &str = "\
You are a clinician reviewing a patient note. Identify the single most likely primary diagnosis.
Answer with the diagnosis name only, on one line.

Clinical note:
{{note}}";

const DEFAULT_DE: &str = "\
You are a clinician reviewing a patient note. List the statements from the note that support the \
primary diagnosis according to its diagnostic criteria. Quote each statement verbatim.
Answer in the form: The below evidence support the diagnosis {\"statement 1\", \"statement 2\"}

Clinical note:
{{note}}";

const DEFAULT_UR: &str = "\
You are a clinician reviewing a patient note. Decide whether the note contains sufficient evidence \
to meet the diagnostic criteria of the primary diagnosis.
Answer with exactly one of:
Sufficient information (Confident diagnosis)
Insufficient information (Diagnostic uncertainty)

Clinical note:
{{note}}";

const DEFAULT_UE: &str = "\
You are a clinician reviewing a patient note. For each diagnostic criterion of the primary diagnosis \
that the note lacks evidence for, write one line of the form: Lack of evidence on \"<criterion>\"
If no evidence is missing, answer None.

Clinical note:
{{note}}";

/// One prompt template per subtask, each containing `{{note}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<Subtask, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = [
            (Subtask::DiseaseDiagnosis, DEFAULT_DD),
            (Subtask::DiagnosticExplanation, DEFAULT_DE),
            (Subtask::UncertaintyRecognition, DEFAULT_UR),
            (Subtask::UncertaintyExplanation, DEFAULT_UE),
        ]
        .into_iter()
        .map(|(t, s)| (t, s.to_string()))
        .collect();
        Self { templates }
    }
}

impl TemplateSet {
    pub fn empty() -> Self {
        Self { templates: BTreeMap::new() }
    }

    pub fn with(mut self, subtask: Subtask, template: impl Into<String>) -> Result<Self, TaskgenError> {
        let template = template.into();
        if !template.contains(NOTE_PLACEHOLDER) {
            return Err(TaskgenError::NoPlaceholder(subtask));
        }
        self.templates.insert(subtask, template);
        Ok(self)
    }

    /// Reads `dd.txt`, `de.txt`, `ur.txt` and `ue.txt` from `dir`; absent
    /// files fall back to the built-in default.
    pub fn load_dir(dir: &Path) -> Result<Self, TaskgenError> {
        let mut set = Self::default();
        for t in Subtask::ALL {
            let path = dir.join(format!("{}.txt", t.code().to_lowercase()));
            match fs::read_to_string(&path) {
                Ok(text) => set = set.with(t, text)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(TaskgenError::Template { path: path.display().to_string(), source });
                }
            }
        }
        Ok(set)
    }

    /// Writes the set as one file per subtask.
    pub fn write_dir(&self, dir: &Path) -> Result<(), TaskgenError> {
        let io = |path: &Path, source| TaskgenError::Template { path: path.display().to_string(), source };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (t, text) in &self.templates {
            let path = dir.join(format!("{}.txt", t.code().to_lowercase()));
            fs::write(&path, text).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }

    pub fn get(&self, subtask: Subtask) -> Result<&str, TaskgenError> {
        self.templates
            .get(&subtask)
            .map(String::as_str)
            .ok_or(TaskgenError::MissingTemplate(subtask))
    }

    pub fn render_prompt(&self, subtask: Subtask, note_text: &str) -> Result<String, TaskgenError> {
        Ok(self.get(subtask)?.replace(NOTE_PLACEHOLDER, note_text))
    }

    /// The template without its note slot, for training records whose note
    /// travels in a separate `input` field.
    pub fn instruction(&self, subtask: Subtask) -> Result<String, TaskgenError> {
        Ok(self.get(subtask)?.replace(NOTE_PLACEHOLDER, "").trim_end().to_string())
    }

    /// Content hash, recorded in run metadata.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (t, text) in &self.templates {
            h.update(t.code().as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}
