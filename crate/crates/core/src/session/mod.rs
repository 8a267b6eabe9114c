//! Per-question exam workflow: initial answer, tool exploration, final answer.

mod engine;
mod event;
mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{InvalidTrace, RubricError};
use crate::domain::{
    ExamId, QuestionId, RubricDimension, SessionId, StudentId, ToolId, ValidationErrors,
};
use crate::gateway::GatewayError;
use crate::store::{DocumentError, StoreError, TraceHeader};
use crate::time::{serde_ts, Timestamp};
use crate::token::AccessToken;

pub use engine::{AskOutcome, FocusKind, SessionEngine, SessionView, MAX_SEARCH_LIMIT};
pub use event::*;
pub use replay::{
    replay, Invariant, QuestionProgress, QuestionState, StreamScope, StreamValidator,
    TraceViolation,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub exam_id: ExamId,
    pub student_id: StudentId,
    #[serde(with = "serde_ts")]
    pub created_at: Timestamp,
    /// Digest of the session access token.
    pub token_hash: String,
}

impl Session {
    /// Metadata for a session restored from a trace document. The access token
    /// is fresh and discarded: imported sessions are read-only archives.
    pub(crate) fn imported(header: &TraceHeader, first_event: Option<Timestamp>) -> Self {
        Self {
            session_id: header.session_id.clone(),
            exam_id: header.exam_id.clone(),
            student_id: header.student_id.clone(),
            created_at: first_event.unwrap_or_default(),
            token_hash: AccessToken::generate().digest(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("unknown exam {0}")]
    UnknownExam(ExamId),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown question {0}")]
    UnknownQuestion(QuestionId),
    #[error("unknown tool {0}")]
    UnknownTool(ToolId),
    #[error("student {0} is not enrolled in this exam")]
    NotEnrolled(StudentId),
    #[error("exam has not opened yet")]
    ExamNotOpen,
    #[error("exam is closed")]
    ExamClosed,
    #[error("session {0} already exists for this student")]
    SessionExists(SessionId),
    #[error("exam {0} already exists")]
    ExamExists(ExamId),
    #[error("order violation: {0}")]
    OrderViolation(String),
    #[error("tool {0} is disabled for this question")]
    ToolDisabled(ToolId),
    #[error("tool {tool} cannot be used for {wanted}")]
    WrongToolKind { tool: ToolId, wanted: &'static str },
    #[error("no event with seq {0} in this question")]
    UnknownEvent(u64),
    #[error("event {seq} is a {} event, expected {}", .actual.as_str(), .expected.as_str())]
    WrongKind {
        seq: u64,
        actual: EventKind,
        expected: EventKind,
    },
    #[error("level {level} for {} is outside 0..={max}", .dimension.as_str())]
    LevelOutOfRange {
        dimension: RubricDimension,
        level: u8,
        max: u8,
    },
    #[error("sequence conflict: {0}")]
    SequenceConflict(String),
    #[error("invalid exam configuration: {0}")]
    Validation(ValidationErrors),
    #[error(transparent)]
    Document(DocumentError),
    #[error("stored trace is inconsistent: {0}")]
    CorruptTrace(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownExam(_) => "unknown_exam",
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::UnknownQuestion(_) => "unknown_question",
            SessionError::UnknownTool(_) => "unknown_tool",
            SessionError::NotEnrolled(_) => "not_enrolled",
            SessionError::ExamNotOpen => "exam_not_open",
            SessionError::ExamClosed => "exam_closed",
            SessionError::SessionExists(_) => "session_exists",
            SessionError::ExamExists(_) => "exam_exists",
            SessionError::OrderViolation(_) => "order_violation",
            SessionError::ToolDisabled(_) => "tool_disabled",
            SessionError::WrongToolKind { .. } => "wrong_tool_kind",
            SessionError::UnknownEvent(_) => "unknown_event",
            SessionError::WrongKind { .. } => "wrong_event_kind",
            SessionError::LevelOutOfRange { .. } => "level_out_of_range",
            SessionError::SequenceConflict(_) => "sequence_conflict",
            SessionError::Validation(_) => "validation_failed",
            SessionError::Document(e) => e.code(),
            SessionError::CorruptTrace(_) => "corrupt_trace",
            SessionError::StorageFailure(_) => "storage_failure",
        }
    }
}

impl From<StoreError> for SessionError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::SequenceConflict { .. } => SessionError::SequenceConflict(e.to_string()),
            StoreError::UnknownSession(id) => SessionError::UnknownSession(id),
            StoreError::SessionExists(id) => SessionError::SessionExists(id),
            StoreError::ExamExists(id) => SessionError::ExamExists(id),
            StoreError::Document(d) => SessionError::Document(d),
            StoreError::StorageFailure(m) => SessionError::StorageFailure(m),
        }
    }
}

impl From<RubricError> for SessionError {
    fn from(e: RubricError) -> Self {
        match e {
            RubricError::LevelOutOfRange {
                dimension,
                level,
                max,
            } => SessionError::LevelOutOfRange {
                dimension,
                level,
                max,
            },
        }
    }
}

impl From<InvalidTrace> for SessionError {
    fn from(e: InvalidTrace) -> Self {
        SessionError::CorruptTrace(e.to_string())
    }
}

impl From<GatewayError> for SessionError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::ToolDisabled(t) => SessionError::ToolDisabled(t),
            GatewayError::WrongToolKind { tool, expected, .. } => SessionError::WrongToolKind {
                tool,
                wanted: match expected {
                    crate::domain::ToolKind::ChatModel => "chat prompts",
                    crate::domain::ToolKind::SearchEngine => "search queries",
                },
            },
            other => SessionError::StorageFailure(format!("unexpected gateway error: {other}")),
        }
    }
}
