//! Line-delimited trace documents.
//!
//! ```text
//! {"format":"mindexam-trace","schema_version":1,"session_id":"…","exam_id":"…","student_id":"…"}
//! {"seq":1,"ts":"2025-12-03T18:32:22.000Z","kind":"initial_answer","question_id":"q1","payload":{"text":"…"}}
//! …
//! ```
//!
//! UTF-8, one JSON object per line, every line terminated by `\n`. Events are
//! ordered by timestamp, then seq, then question id (focus stream first).
//! Payload keys are written in sorted order and timestamps always carry
//! exactly three fractional digits. Rendering is canonical, so `render(parse(render(doc)))` is byte-identical
//! to `render(doc)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{ExamId, QuestionId, SessionId, StudentId};
use crate::session::{
    EventKind, EventPayload, Invariant, StreamScope, StreamValidator, TraceEvent,
};
use crate::time::{format_ts, parse_ts};

pub const FORMAT_TAG: &str = "mindexam-trace";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub schema_version: u32,
    pub session_id: SessionId,
    pub exam_id: ExamId,
    pub student_id: StudentId,
}

impl TraceHeader {
    pub fn new(session_id: SessionId, exam_id: ExamId, student_id: StudentId) -> Self {
        Self {
            format: FORMAT_TAG.to_owned(),
            schema_version: SCHEMA_VERSION,
            session_id,
            exam_id,
            student_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDocument {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("schema violation at line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("invariant {invariant} violated at line {line}: {detail}")]
    InvariantViolation {
        line: usize,
        invariant: Invariant,
        detail: String,
    },
}

impl DocumentError {
    pub fn code(&self) -> &'static str {
        match self {
            DocumentError::SchemaViolation { .. } => "schema_violation",
            DocumentError::InvariantViolation { .. } => "invariant_violation",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    seq: u64,
    ts: String,
    kind: EventKind,
    question_id: Option<QuestionId>,
    payload: Value,
}

/// Sort key for the merged, cross-stream view of a session.
pub fn merged_order(a: &TraceEvent, b: &TraceEvent) -> std::cmp::Ordering {
    (a.ts, a.seq, &a.question_id).cmp(&(b.ts, b.seq, &b.question_id))
}

fn to_line(event: &TraceEvent) -> EventLine {
    let tagged = serde_json::to_value(&event.payload).expect("payloads always serialize");
    let payload = match tagged {
        Value::Object(mut map) => map.remove("payload").unwrap_or(Value::Null),
        _ => unreachable!("adjacently tagged enum serializes to an object"),
    };
    EventLine {
        seq: event.seq,
        ts: format_ts(&event.ts),
        kind: event.kind(),
        question_id: event.question_id.clone(),
        payload,
    }
}

impl Serialize for TraceEvent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        to_line(self).serialize(s)
    }
}

pub fn render_event(event: &TraceEvent) -> String {
    serde_json::to_string(&to_line(event)).expect("event lines always serialize")
}

pub fn render_header(header: &TraceHeader) -> String {
    serde_json::to_string(header).expect("headers always serialize")
}

/// Canonical text of a trace document.
pub fn render(doc: &TraceDocument) -> String {
    let mut events: Vec<&TraceEvent> = doc.events.iter().collect();
    events.sort_by(|a, b| merged_order(a, b));
    let mut out = render_header(&doc.header);
    out.push('\n');
    for e in events {
        out.push_str(&render_event(e));
        out.push('\n');
    }
    out
}

pub fn parse_header(line: &str, line_no: usize) -> Result<TraceHeader, DocumentError> {
    let header: TraceHeader =
        serde_json::from_str(line).map_err(|e| DocumentError::SchemaViolation {
            line: line_no,
            message: format!("invalid header: {e}"),
        })?;
    if header.format != FORMAT_TAG {
        return Err(DocumentError::SchemaViolation {
            line: line_no,
            message: format!("format must be {FORMAT_TAG:?}"),
        });
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(DocumentError::SchemaViolation {
            line: line_no,
            message: format!("unsupported schema_version {}", header.schema_version),
        });
    }
    Ok(header)
}

pub fn parse_event(line: &str, line_no: usize) -> Result<TraceEvent, DocumentError> {
    let schema = |message: String| DocumentError::SchemaViolation {
        line: line_no,
        message,
    };
    let raw: EventLine =
        serde_json::from_str(line).map_err(|e| schema(format!("invalid event record: {e}")))?;
    let ts = parse_ts(&raw.ts).map_err(schema)?;
    if format_ts(&ts) != raw.ts {
        return Err(schema(format!(
            "timestamp {:?} is not in canonical YYYY-MM-DDTHH:MM:SS.sssZ form",
            raw.ts
        )));
    }
    let tagged = serde_json::json!({ "kind": raw.kind, "payload": raw.payload });
    let payload: EventPayload = serde_json::from_value(tagged)
        .map_err(|e| schema(format!("invalid {} payload: {e}", raw.kind.as_str())))?;
    if raw.kind.is_focus() != raw.question_id.is_none() {
        return Err(schema(if raw.kind.is_focus() {
            "focus events carry question_id null".to_owned()
        } else {
            format!("{} requires a question_id", raw.kind.as_str())
        }));
    }
    Ok(TraceEvent {
        seq: raw.seq,
        ts,
        question_id: raw.question_id,
        payload,
    })
}

/// Parses a document and checks every workflow invariant, stream by stream.
pub fn parse(text: &str) -> Result<TraceDocument, DocumentError> {
    if text.is_empty() {
        return Err(DocumentError::SchemaViolation {
            line: 1,
            message: "missing header".into(),
        });
    }
    if !text.ends_with('\n') {
        return Err(DocumentError::SchemaViolation {
            line: text.lines().count(),
            message: "last line is not newline-terminated".into(),
        });
    }
    let mut lines = text
        .split_terminator('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().expect("non-empty text has a first line");
    let header = parse_header(first, 1)?;

    let mut streams: BTreeMap<Option<QuestionId>, StreamValidator> = BTreeMap::new();
    let mut events = Vec::new();
    for (line_no, line) in lines {
        let event = parse_event(line, line_no)?;
        let scope = if event.question_id.is_some() {
            StreamScope::Question
        } else {
            StreamScope::Focus
        };
        streams
            .entry(event.question_id.clone())
            .or_insert_with(|| StreamValidator::new(scope))
            .push(&event)
            .map_err(|v| DocumentError::InvariantViolation {
                line: line_no,
                invariant: v.invariant,
                detail: v.detail,
            })?;
        events.push(event);
    }
    Ok(TraceDocument { header, events })
}
