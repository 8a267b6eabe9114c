//! The per-question workflow as a replayable state machine.
//!
//! The engine consults [`StreamValidator::check`] before every append, and
//! trace import and analytics replay stored events through the same machine,
//! so a trace accepted anywhere satisfies the same rules.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{EventKind, EventPayload, TraceEvent};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionState {
    AwaitingInitial,
    Exploring,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionProgress {
    pub state: QuestionState,
    pub event_count: u64,
}

impl Default for QuestionProgress {
    fn default() -> Self {
        Self {
            state: QuestionState::AwaitingInitial,
            event_count: 0,
        }
    }
}

/// Named trace invariants, used in error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Invariant {
    InitialAnswerFirst,
    GaplessSeq,
    MonotonicTimestamps,
    ResponseLink,
    CommentLink,
    ResultsLink,
    ToolErrorLink,
    RevisionLink,
    EditBeforeTools,
    StateTransition,
    StreamScope,
}

impl Invariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Invariant::InitialAnswerFirst => "initial-answer-first",
            Invariant::GaplessSeq => "gapless-seq",
            Invariant::MonotonicTimestamps => "monotonic-timestamps",
            Invariant::ResponseLink => "response-link",
            Invariant::CommentLink => "comment-link",
            Invariant::ResultsLink => "results-link",
            Invariant::ToolErrorLink => "tool-error-link",
            Invariant::RevisionLink => "revision-link",
            Invariant::EditBeforeTools => "edit-before-tools",
            Invariant::StateTransition => "state-transition",
            Invariant::StreamScope => "stream-scope",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{invariant} violated at seq {seq}: {detail}")]
pub struct TraceViolation {
    pub invariant: Invariant,
    pub seq: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamScope {
    Question,
    Focus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    kind: EventKind,
    /// For prompts and queries: whether a response, results or error exists.
    answered: bool,
}

#[derive(Debug, Clone)]
pub struct StreamValidator {
    scope: StreamScope,
    progress: QuestionProgress,
    last_ts: Option<Timestamp>,
    entries: HashMap<u64, Entry>,
    tool_used: bool,
    last_final: Option<u64>,
}

impl StreamValidator {
    pub fn new(scope: StreamScope) -> Self {
        Self {
            scope,
            progress: QuestionProgress::default(),
            last_ts: None,
            entries: HashMap::new(),
            tool_used: false,
            last_final: None,
        }
    }

    pub fn progress(&self) -> QuestionProgress {
        self.progress
    }

    pub fn next_seq(&self) -> u64 {
        self.progress.event_count + 1
    }

    pub fn tool_used(&self) -> bool {
        self.tool_used
    }

    pub fn last_final(&self) -> Option<u64> {
        self.last_final
    }

    pub fn last_ts(&self) -> Option<Timestamp> {
        self.last_ts
    }

    pub fn kind_of(&self, seq: u64) -> Option<EventKind> {
        self.entries.get(&seq).map(|e| e.kind)
    }

    /// Verifies that `event` may be appended next, without recording it.
    pub fn check(&self, event: &TraceEvent) -> Result<QuestionState, TraceViolation> {
        let seq = event.seq;
        let fail = |invariant: Invariant, detail: String| TraceViolation {
            invariant,
            seq,
            detail,
        };

        if seq != self.next_seq() {
            return Err(fail(
                Invariant::GaplessSeq,
                format!("expected seq {}, found {seq}", self.next_seq()),
            ));
        }
        if let Some(last) = self.last_ts {
            if event.ts < last {
                return Err(fail(
                    Invariant::MonotonicTimestamps,
                    "timestamp earlier than the previous event".into(),
                ));
            }
        }

        let kind = event.kind();
        if self.scope == StreamScope::Focus {
            if !kind.is_focus() {
                return Err(fail(
                    Invariant::StreamScope,
                    format!("{} in the focus stream", kind.as_str()),
                ));
            }
            return Ok(self.progress.state);
        }
        if kind.is_focus() {
            return Err(fail(
                Invariant::StreamScope,
                format!("{} in a question stream", kind.as_str()),
            ));
        }

        use QuestionState::*;
        let state = self.progress.state;
        if state == AwaitingInitial && kind != EventKind::InitialAnswer {
            return Err(fail(
                Invariant::InitialAnswerFirst,
                format!("{} before the initial answer", kind.as_str()),
            ));
        }

        let bad_state = |what: &str| {
            Err(fail(
                Invariant::StateTransition,
                format!("{what} not allowed while {}", state_name(state)),
            ))
        };

        match &event.payload {
            EventPayload::InitialAnswer(_) => match state {
                AwaitingInitial => Ok(Exploring),
                _ => Err(fail(
                    Invariant::InitialAnswerFirst,
                    "second initial_answer in stream".into(),
                )),
            },
            EventPayload::InitialAnswerEdit(_) => match state {
                Exploring if !self.tool_used => Ok(Exploring),
                Exploring => Err(fail(
                    Invariant::EditBeforeTools,
                    "initial answer is frozen once a tool has been consulted".into(),
                )),
                _ => bad_state("initial_answer_edit"),
            },
            EventPayload::AiPrompt(_) | EventPayload::SearchQuery(_) => match state {
                Exploring => Ok(Exploring),
                _ => bad_state(kind.as_str()),
            },
            EventPayload::AiResponse(p) => {
                self.check_answer_link(
                    p.linked_seq,
                    &[EventKind::AiPrompt],
                    Invariant::ResponseLink,
                    seq,
                )?;
                Ok(state)
            }
            EventPayload::SearchResults(p) => {
                self.check_answer_link(
                    p.linked_seq,
                    &[EventKind::SearchQuery],
                    Invariant::ResultsLink,
                    seq,
                )?;
                Ok(state)
            }
            EventPayload::ToolError(p) => {
                self.check_answer_link(
                    p.linked_seq,
                    &[EventKind::AiPrompt, EventKind::SearchQuery],
                    Invariant::ToolErrorLink,
                    seq,
                )?;
                Ok(state)
            }
            EventPayload::AiComment(p) => {
                match self.entries.get(&p.linked_seq) {
                    Some(e) if e.kind == EventKind::AiResponse => {}
                    _ => {
                        return Err(fail(
                            Invariant::CommentLink,
                            format!("seq {} is not an earlier ai_response", p.linked_seq),
                        ))
                    }
                }
                Ok(state)
            }
            EventPayload::Revision(p) => {
                if state != Finalized {
                    return bad_state("revision");
                }
                if Some(p.reopens_seq) != self.last_final {
                    return Err(fail(
                        Invariant::RevisionLink,
                        format!(
                            "revision must reopen the latest final_answer, not seq {}",
                            p.reopens_seq
                        ),
                    ));
                }
                Ok(Exploring)
            }
            EventPayload::FinalAnswer(_) => match state {
                Exploring => Ok(Finalized),
                _ => bad_state("final_answer"),
            },
            EventPayload::FocusLost(_) | EventPayload::FocusRegained(_) => {
                unreachable!("handled above")
            }
        }
    }

    fn check_answer_link(
        &self,
        linked: u64,
        accepted: &[EventKind],
        invariant: Invariant,
        seq: u64,
    ) -> Result<(), TraceViolation> {
        match self.entries.get(&linked) {
            Some(e) if accepted.contains(&e.kind) && !e.answered => Ok(()),
            Some(e) if accepted.contains(&e.kind) => Err(TraceViolation {
                invariant,
                seq,
                detail: format!("seq {linked} already has an answer"),
            }),
            _ => Err(TraceViolation {
                invariant,
                seq,
                detail: format!(
                    "seq {linked} is not an earlier {}",
                    accepted
                        .iter()
                        .map(|k| k.as_str())
                        .collect::<Vec<_>>()
                        .join(" or ")
                ),
            }),
        }
    }

    /// Checks and records `event`.
    pub fn push(&mut self, event: &TraceEvent) -> Result<(), TraceViolation> {
        let next_state = self.check(event)?;
        let kind = event.kind();
        if let Some(linked) = event.payload.linked_seq() {
            if matches!(
                kind,
                EventKind::AiResponse | EventKind::SearchResults | EventKind::ToolError
            ) {
                if let Some(e) = self.entries.get_mut(&linked) {
                    e.answered = true;
                }
            }
        }
        if kind.is_tool_use() {
            self.tool_used = true;
        }
        if kind == EventKind::FinalAnswer {
            self.last_final = Some(event.seq);
        }
        self.entries.insert(
            event.seq,
            Entry {
                kind,
                answered: false,
            },
        );
        self.progress = QuestionProgress {
            state: next_state,
            event_count: event.seq,
        };
        self.last_ts = Some(event.ts);
        Ok(())
    }
}

fn state_name(state: QuestionState) -> &'static str {
    match state {
        QuestionState::AwaitingInitial => "awaiting the initial answer",
        QuestionState::Exploring => "exploring",
        QuestionState::Finalized => "finalized",
    }
}

/// Replays a question stream and returns the resulting progress.
pub fn replay(events: &[TraceEvent]) -> Result<QuestionProgress, TraceViolation> {
    let mut v = StreamValidator::new(StreamScope::Question);
    for e in events {
        v.push(e)?;
    }
    Ok(v.progress())
}
