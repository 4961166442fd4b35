use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};

use super::model::{ExportFilter, GradeTable, ItemView, LogEvent, NewItem, ReviewItem, ReviewState};
use super::ReviewError;
use crate::uncertainty::ReviewDecisions;

/// Append-only NDJSON event log with an in-memory materialized view.
///
/// Mutations are serialized by one writer lock: validate against the view,
/// append and sync, then apply. Reads only take the view's read lock.
#[derive(Debug)]
pub struct ReviewStore {
    path: PathBuf,
    writer: Mutex<File>,
    state: RwLock<ReviewState>,
}

impl ReviewStore {
    /// Opens (or creates) the log and replays it. An unterminated final
    /// line is the remnant of an interrupted append; it is dropped and the
    /// file truncated back to the last complete event.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ReviewError> {
        let path = path.into();
        let io = |source| ReviewError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let state = replay(&path, &bytes[..complete])?;
        if complete < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of an interrupted append",
                path.display(),
                bytes.len() - complete
            );
            let f = OpenOptions::new().write(true).open(&path).map_err(io)?;
            f.set_len(complete as u64).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self { path, writer: Mutex::new(file), state: RwLock::new(state) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> RwLockReadGuard<'_, ReviewState> {
        self.state.read()
    }

    /// Appends the events and applies them, all or nothing.
    fn commit(&self, events: Vec<LogEvent>) -> Result<Vec<ReviewItem>, ReviewError> {
        let mut file = self.writer.lock();
        // dry run on a scratch copy so a batch is validated as a whole
        let mut scratch = None;
        if events.len() > 1 {
            let mut s = self.state.read().clone();
            for e in &events {
                s.apply(e.clone())?;
            }
            scratch = Some(s);
        } else if let Some(e) = events.first() {
            self.state.read().check(e)?;
        }
        let mut buf = Vec::new();
        for e in &events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let io = |source| ReviewError::Io { path: self.path.clone(), source };
        file.write_all(&buf).map_err(io)?;
        file.sync_data().map_err(io)?;

        let mut state = self.state.write();
        let ids: Vec<String> = events.iter().map(event_item).collect();
        match scratch {
            Some(s) => *state = s,
            None => {
                for e in events {
                    state.apply(e)?;
                }
            }
        }
        Ok(ids.iter().map(|id| state.get(id).expect("applied").clone()).collect())
    }

    /// Adds new open items; any duplicate id rejects the whole batch.
    pub fn enqueue(&self, items: Vec<NewItem>) -> Result<usize, ReviewError> {
        let n = items.len();
        if n > 0 {
            self.commit(items.into_iter().map(LogEvent::Enqueued).collect())?;
        }
        Ok(n)
    }

    /// Records a verification decision or a grade.
    pub fn submit(&self, event: LogEvent) -> Result<ReviewItem, ReviewError> {
        if matches!(event, LogEvent::Enqueued(_)) {
            return Err(ReviewError::Validation("use enqueue to add items".into()));
        }
        Ok(self.commit(vec![event])?.remove(0))
    }

    pub fn view(&self, item_id: &str, blind: bool) -> Result<ItemView, ReviewError> {
        self.state
            .read()
            .get(item_id)
            .map(|i| i.view(blind))
            .ok_or_else(|| ReviewError::NotFound(item_id.to_string()))
    }

    pub fn export_grades(&self, filter: &ExportFilter) -> GradeTable {
        self.state.read().export(filter)
    }

    pub fn review_decisions(&self) -> ReviewDecisions {
        self.state.read().review_decisions()
    }
}

fn event_item(e: &LogEvent) -> String {
    match e {
        LogEvent::Enqueued(n) => n.item_id.clone(),
        LogEvent::Verification(v) => v.item_id.clone(),
        LogEvent::Grade(g) => g.item_id.clone(),
    }
}

fn replay(path: &Path, bytes: &[u8]) -> Result<ReviewState, ReviewError> {
    let mut state = ReviewState::default();
    let corrupt = |line: usize, detail: String| ReviewError::CorruptLog { path: path.to_path_buf(), line, detail };
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let event: LogEvent = serde_json::from_slice(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        state.apply(event).map_err(|e| corrupt(i + 1, e.to_string()))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::super::model::tests::{decide, grade, grading_item, masked_items};
    use super::super::model::{Decision, ItemKind, ItemStatus};
    use super::*;
    use std::sync::Arc;

    #[test]
    fn enqueue_hundred_masked_notes() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path().join("events.log")).unwrap();
        assert_eq!(store.enqueue(masked_items(100)).unwrap(), 100);
        let s = store.state();
        assert_eq!(s.len(), 100);
        assert!(s.items().all(|i| i.status == ItemStatus::Open && i.kind == ItemKind::MaskVerification));
        drop(s);
        assert_eq!(store.enqueue(vec![]).unwrap(), 0);
        let dup = masked_items(1);
        assert!(matches!(store.enqueue(dup), Err(ReviewError::Conflict(_))));
        // a batch with an internal duplicate writes nothing
        let before = fs::read(store.path()).unwrap();
        assert!(store.enqueue(vec![grading_item("x"), grading_item("x")]).is_err());
        assert_eq!(fs::read(store.path()).unwrap(), before);
    }

    #[test]
    fn replay_reproduces_state_and_ignores_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let store = ReviewStore::open(&path).unwrap();
        store.enqueue(vec![grading_item("a"), grading_item("b")]).unwrap();
        store.submit(grade("a", "r1", 4, 3)).unwrap();
        store.submit(grade("a", "r2", 3, 3)).unwrap();
        store.submit(grade("b", "r1", 5, 5)).unwrap();
        let before = store.state().clone();
        drop(store);

        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"event":"grade","item_id":"a","revie"#).unwrap();
        drop(f);
        let reopened = ReviewStore::open(&path).unwrap();
        assert_eq!(*reopened.state(), before);
        assert_eq!(reopened.state().digest(), before.digest());
        assert_eq!(reopened.state().get("a").unwrap().status, ItemStatus::NeedsAdjudication);
        // appends after recovery start on a clean line
        reopened.submit(grade("a", "r3", 3, 3)).unwrap();
        drop(reopened);
        let again = ReviewStore::open(&path).unwrap();
        assert_eq!(again.state().get("a").unwrap().status, ItemStatus::Closed);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(ReviewStore::open(&path), Err(ReviewError::CorruptLog { line: 1, .. })));
    }

    #[test]
    fn concurrent_decisions_first_writer_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(ReviewStore::open(dir.path().join("events.log")).unwrap());
        let items = masked_items(1);
        let id = items[0].item_id.clone();
        store.enqueue(items).unwrap();
        let results: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8)
                .map(|r| {
                    let (store, id) = (&store, &id);
                    s.spawn(move || store.submit(decide(id, &format!("r{r}"), Decision::Approve)))
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results.iter().filter_map(|r| r.as_ref().err()).all(|e| matches!(e, ReviewError::Conflict(_))));
        let lines = fs::read_to_string(store.path()).unwrap().lines().count();
        assert_eq!(lines, 2);
    }

    #[test]
    fn rejected_note_is_excluded_from_balanced_corpus() {
        use crate::synth::{SynthConfig, SyntheticCorpus};
        use crate::uncertainty::{build_balanced_corpus, BalanceOptions, CorpusEntry, ReviewStatus};

        let c = SyntheticCorpus::generate(&SynthConfig { diseases: 1, notes_per_disease: 10, seed: 4, ..Default::default() });
        let opts = BalanceOptions { seed: 1, k: 1 };
        let first = build_balanced_corpus(&c.annotated, &c.criteria, opts, &ReviewDecisions::new()).unwrap();
        let masked: Vec<_> = first
            .entries
            .iter()
            .filter_map(|e| match e {
                CorpusEntry::Masked(m) => Some(m.clone()),
                _ => None,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path().join("events.log")).unwrap();
        store
            .enqueue(
                masked
                    .iter()
                    .map(|m| NewItem {
                        item_id: m.masked_note_id.clone(),
                        payload: super::super::ReviewPayload::MaskVerification { masked_note: m.clone() },
                        assigned_reviewers: vec![],
                    })
                    .collect(),
            )
            .unwrap();
        let rejected = masked[0].masked_note_id.clone();
        store.submit(decide(&rejected, "r", Decision::Reject)).unwrap();
        for m in &masked[1..] {
            store.submit(decide(&m.masked_note_id, "r", Decision::Approve)).unwrap();
        }
        let second = build_balanced_corpus(&c.annotated, &c.criteria, opts, &store.review_decisions()).unwrap();
        assert!(second.entries.iter().all(|e| e.id() != rejected));
        let approved = second
            .entries
            .iter()
            .filter(|e| matches!(e, CorpusEntry::Masked(m) if m.review_status == ReviewStatus::Approved))
            .count();
        assert_eq!(approved, masked.len() - 1);
        let masked_now = second.entries.iter().filter(|e| matches!(e, CorpusEntry::Masked(_))).count();
        assert_eq!(masked_now, masked.len(), "a replacement keeps the 1:1 balance");
    }
}
