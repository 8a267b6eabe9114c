//! Append-only persistence for exams, sessions, trace events, rubric scores
//! and issued secure links.
//!
//! Neither backend exposes an update or delete path: every write is an
//! append, and a trace event is accepted only if its seq is exactly one past
//! the current head of its stream.

pub mod document;
mod file;
mod memory;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::RubricScore;
use crate::domain::{Exam, ExamId, QuestionId, SessionId, StudentId};
use crate::session::{Session, TraceEvent};
use crate::time::{serde_ts, Timestamp};

pub use document::{DocumentError, TraceDocument, TraceHeader};
pub use file::FileStore;
pub use memory::MemoryStore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredEventRecord {
    pub session_id: SessionId,
    pub event: TraceEvent,
}

/// A secure link handed to one student for one exam. Only the token's
/// digest is stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGrant {
    pub token_hash: String,
    pub exam_id: ExamId,
    pub student_id: StudentId,
    #[serde(with = "serde_ts")]
    pub issued_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("sequence conflict in session {session} stream {}: expected seq {expected}, got {found}",
        .question.as_ref().map(|q| q.as_str()).unwrap_or("focus"))]
    SequenceConflict {
        session: SessionId,
        question: Option<QuestionId>,
        expected: u64,
        found: u64,
    },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} already exists")]
    SessionExists(SessionId),
    #[error("exam {0} already exists")]
    ExamExists(ExamId),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::StorageFailure(e.to_string())
    }
}

pub trait TraceStore: Send + Sync {
    fn put_exam(&self, exam: &Exam) -> Result<(), StoreError>;
    fn exams(&self) -> Result<Vec<Exam>, StoreError>;

    fn create_session(&self, session: &Session) -> Result<(), StoreError>;
    fn sessions(&self) -> Result<Vec<Session>, StoreError>;
    fn session(&self, id: &SessionId) -> Result<Session, StoreError>;

    /// Durable once this returns `Ok`.
    fn append_event(&self, record: &StoredEventRecord) -> Result<(), StoreError>;

    /// One stream in seq order, or with `question = None` every stream of the
    /// session merged by timestamp with seq as tiebreaker.
    fn load_trace(
        &self,
        session: &SessionId,
        question: Option<&QuestionId>,
    ) -> Result<Vec<StoredEventRecord>, StoreError>;

    fn append_score(&self, score: &RubricScore) -> Result<(), StoreError>;
    fn scores(&self, session: &SessionId) -> Result<Vec<RubricScore>, StoreError>;

    fn put_link(&self, grant: &LinkGrant) -> Result<(), StoreError>;
    fn links(&self) -> Result<Vec<LinkGrant>, StoreError>;

    /// The session as a line-delimited trace document.
    fn export_trace(&self, session: &SessionId) -> Result<String, StoreError> {
        let s = self.session(session)?;
        let events = self
            .load_trace(session, None)?
            .into_iter()
            .map(|r| r.event)
            .collect();
        Ok(document::render(&TraceDocument {
            header: TraceHeader::new(s.session_id, s.exam_id, s.student_id),
            events,
        }))
    }

    /// Stores an already-validated document as a new session.
    fn import_document(&self, doc: &TraceDocument) -> Result<SessionId, StoreError> {
        let session = Session::imported(&doc.header, doc.events.iter().map(|e| e.ts).min());
        self.create_session(&session)?;
        let mut events: Vec<&TraceEvent> = doc.events.iter().collect();
        events.sort_by(|a, b| (&a.question_id, a.seq).cmp(&(&b.question_id, b.seq)));
        for e in events {
            self.append_event(&StoredEventRecord {
                session_id: session.session_id.clone(),
                event: e.clone(),
            })?;
        }
        Ok(session.session_id)
    }

    /// Parses, validates and stores a trace document.
    fn import_trace(&self, text: &str) -> Result<SessionId, StoreError> {
        let doc = document::parse(text)?;
        self.import_document(&doc)
    }
}

/// In-memory state shared by both backends.
#[derive(Debug, Default)]
pub(crate) struct Index {
    exams: BTreeMap<ExamId, Exam>,
    sessions: BTreeMap<SessionId, SessionEntry>,
    links: Vec<LinkGrant>,
}

#[derive(Debug)]
struct SessionEntry {
    session: Session,
    events: Vec<StoredEventRecord>,
    heads: HashMap<Option<QuestionId>, u64>,
    scores: Vec<RubricScore>,
}

impl Index {
    fn check_exam(&self, exam: &Exam) -> Result<(), StoreError> {
        if self.exams.contains_key(&exam.exam_id) {
            return Err(StoreError::ExamExists(exam.exam_id.clone()));
        }
        Ok(())
    }

    fn insert_exam(&mut self, exam: Exam) {
        self.exams.insert(exam.exam_id.clone(), exam);
    }

    fn check_session(&self, session: &Session) -> Result<(), StoreError> {
        if self.sessions.contains_key(&session.session_id) {
            return Err(StoreError::SessionExists(session.session_id.clone()));
        }
        Ok(())
    }

    fn insert_session(&mut self, session: Session) {
        self.sessions.insert(
            session.session_id.clone(),
            SessionEntry {
                session,
                events: Vec::new(),
                heads: HashMap::new(),
                scores: Vec::new(),
            },
        );
    }

    fn entry(&self, id: &SessionId) -> Result<&SessionEntry, StoreError> {
        self.sessions
            .get(id)
            .ok_or_else(|| StoreError::UnknownSession(id.clone()))
    }

    fn check_append(&self, record: &StoredEventRecord) -> Result<(), StoreError> {
        let entry = self.entry(&record.session_id)?;
        let head = entry
            .heads
            .get(&record.event.question_id)
            .copied()
            .unwrap_or(0);
        if record.event.seq != head + 1 {
            return Err(StoreError::SequenceConflict {
                session: record.session_id.clone(),
                question: record.event.question_id.clone(),
                expected: head + 1,
                found: record.event.seq,
            });
        }
        Ok(())
    }

    fn insert_event(&mut self, record: StoredEventRecord) {
        let entry = self
            .sessions
            .get_mut(&record.session_id)
            .expect("check_append verified the session");
        entry
            .heads
            .insert(record.event.question_id.clone(), record.event.seq);
        entry.events.push(record);
    }

    fn load(
        &self,
        session: &SessionId,
        question: Option<&QuestionId>,
    ) -> Result<Vec<StoredEventRecord>, StoreError> {
        let entry = self.entry(session)?;
        let mut out: Vec<StoredEventRecord> = match question {
            Some(q) => entry
                .events
                .iter()
                .filter(|r| r.event.question_id.as_ref() == Some(q))
                .cloned()
                .collect(),
            None => entry.events.clone(),
        };
        match question {
            Some(_) => out.sort_by_key(|r| r.event.seq),
            None => out.sort_by(|a, b| document::merged_order(&a.event, &b.event)),
        }
        Ok(out)
    }

    fn check_score(&self, score: &RubricScore) -> Result<(), StoreError> {
        self.entry(&score.session_id).map(|_| ())
    }

    fn insert_score(&mut self, score: RubricScore) {
        if let Some(e) = self.sessions.get_mut(&score.session_id) {
            e.scores.push(score);
        }
    }

    fn exams(&self) -> Vec<Exam> {
        self.exams.values().cloned().collect()
    }

    fn sessions(&self) -> Vec<Session> {
        self.sessions.values().map(|e| e.session.clone()).collect()
    }

    fn scores(&self, session: &SessionId) -> Result<Vec<RubricScore>, StoreError> {
        Ok(self.entry(session)?.scores.clone())
    }
}
