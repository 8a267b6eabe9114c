//! Directory-backed store: one append-only JSON-lines file per record type.
//!
//! ```text
//! <dir>/exams.jsonl     validated exams
//! <dir>/sessions.jsonl  session metadata
//! <dir>/events.jsonl    {"session_id": …, "event": <trace document event line>}
//! <dir>/scores.jsonl    rubric scores
//! <dir>/links.jsonl     secure-link grants (token digests only)
//! ```
//!
//! Each append is written as one complete line and synced before it is
//! acknowledged. On open, a trailing partial line (a write cut short by a
//! crash, never acknowledged) is truncated away.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::value::RawValue;

use super::document::{parse_event, render_event};
use super::{Index, LinkGrant, StoreError, StoredEventRecord, TraceStore};
use crate::analytics::RubricScore;
use crate::domain::{Exam, QuestionId, SessionId};
use crate::session::Session;

struct AppendLog {
    path: PathBuf,
    file: File,
}

impl AppendLog {
    /// Opens (creating if needed) and returns the complete lines already present.
    fn open(path: PathBuf) -> Result<(Self, Vec<String>), StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut content = String::new();
        file.read_to_string(&mut content)
            .map_err(|e| StoreError::StorageFailure(format!("{}: {e}", path.display())))?;
        let complete = content.rfind('\n').map_or(0, |i| i + 1);
        if complete < content.len() {
            file.set_len(complete as u64)?;
            file.sync_data()?;
        }
        file.seek(SeekFrom::End(0))?;
        let lines = content[..complete].lines().map(str::to_owned).collect();
        Ok((Self { path, file }, lines))
    }

    fn append(&mut self, line: &str) -> Result<(), StoreError> {
        debug_assert!(!line.contains('\n'));
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.file
            .write_all(&buf)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| StoreError::StorageFailure(format!("{}: {e}", self.path.display())))
    }
}

struct Logs {
    exams: AppendLog,
    sessions: AppendLog,
    events: AppendLog,
    scores: AppendLog,
    links: AppendLog,
}

struct Inner {
    index: Index,
    logs: Logs,
}

pub struct FileStore {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

#[derive(Serialize, Deserialize)]
struct EventRow<'a> {
    session_id: SessionId,
    #[serde(borrow)]
    event: &'a RawValue,
}

fn decode<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T, StoreError> {
    serde_json::from_str(line)
        .map_err(|e| StoreError::StorageFailure(format!("{}:{}: {e}", path.display(), line_no + 1)))
}

fn encode<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("stored records always serialize")
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut index = Index::default();

        let (exams, lines) = AppendLog::open(dir.join("exams.jsonl"))?;
        for (i, line) in lines.iter().enumerate() {
            let exam: Exam = decode(&exams.path, i, line)?;
            index.insert_exam(exam);
        }
        let (sessions, lines) = AppendLog::open(dir.join("sessions.jsonl"))?;
        for (i, line) in lines.iter().enumerate() {
            let session: Session = decode(&sessions.path, i, line)?;
            index.insert_session(session);
        }
        let (events, lines) = AppendLog::open(dir.join("events.jsonl"))?;
        for (i, line) in lines.iter().enumerate() {
            let row: EventRow<'_> = decode_borrowed(&events.path, i, line)?;
            let event = parse_event(row.event.get(), i + 1).map_err(|e| {
                StoreError::StorageFailure(format!("{}:{}: {e}", events.path.display(), i + 1))
            })?;
            let record = StoredEventRecord {
                session_id: row.session_id,
                event,
            };
            index.check_append(&record)?;
            index.insert_event(record);
        }
        let (scores, lines) = AppendLog::open(dir.join("scores.jsonl"))?;
        for (i, line) in lines.iter().enumerate() {
            let score: RubricScore = decode(&scores.path, i, line)?;
            index.insert_score(score);
        }
        let (links, lines) = AppendLog::open(dir.join("links.jsonl"))?;
        for (i, line) in lines.iter().enumerate() {
            index.links.push(decode(&links.path, i, line)?);
        }

        Ok(Self {
            dir,
            inner: Mutex::new(Inner {
                index,
                logs: Logs {
                    exams,
                    sessions,
                    events,
                    scores,
                    links,
                },
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn inner(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn decode_borrowed<'a, T: Deserialize<'a>>(
    path: &Path,
    line_no: usize,
    line: &'a str,
) -> Result<T, StoreError> {
    serde_json::from_str(line)
        .map_err(|e| StoreError::StorageFailure(format!("{}:{}: {e}", path.display(), line_no + 1)))
}

impl TraceStore for FileStore {
    fn put_exam(&self, exam: &Exam) -> Result<(), StoreError> {
        let mut inner = self.inner();
        inner.index.check_exam(exam)?;
        inner.logs.exams.append(&encode(exam))?;
        inner.index.insert_exam(exam.clone());
        Ok(())
    }

    fn exams(&self) -> Result<Vec<Exam>, StoreError> {
        Ok(self.inner().index.exams())
    }

    fn create_session(&self, session: &Session) -> Result<(), StoreError> {
        let mut inner = self.inner();
        inner.index.check_session(session)?;
        inner.logs.sessions.append(&encode(session))?;
        inner.index.insert_session(session.clone());
        Ok(())
    }

    fn sessions(&self) -> Result<Vec<Session>, StoreError> {
        Ok(self.inner().index.sessions())
    }

    fn session(&self, id: &SessionId) -> Result<Session, StoreError> {
        Ok(self.inner().index.entry(id)?.session.clone())
    }

    fn append_event(&self, record: &StoredEventRecord) -> Result<(), StoreError> {
        let mut inner = self.inner();
        inner.index.check_append(record)?;
        let event = render_event(&record.event);
        let raw = RawValue::from_string(event).expect("rendered events are valid JSON");
        let line = encode(&EventRow {
            session_id: record.session_id.clone(),
            event: &raw,
        });
        inner.logs.events.append(&line)?;
        inner.index.insert_event(record.clone());
        Ok(())
    }

    fn load_trace(
        &self,
        session: &SessionId,
        question: Option<&QuestionId>,
    ) -> Result<Vec<StoredEventRecord>, StoreError> {
        self.inner().index.load(session, question)
    }

    fn append_score(&self, score: &RubricScore) -> Result<(), StoreError> {
        let mut inner = self.inner();
        inner.index.check_score(score)?;
        inner.logs.scores.append(&encode(score))?;
        inner.index.insert_score(score.clone());
        Ok(())
    }

    fn scores(&self, session: &SessionId) -> Result<Vec<RubricScore>, StoreError> {
        self.inner().index.scores(session)
    }

    fn put_link(&self, grant: &LinkGrant) -> Result<(), StoreError> {
        let mut inner = self.inner();
        inner.logs.links.append(&encode(grant))?;
        inner.index.links.push(grant.clone());
        Ok(())
    }

    fn links(&self) -> Result<Vec<LinkGrant>, StoreError> {
        Ok(self.inner().index.links.clone())
    }
}
