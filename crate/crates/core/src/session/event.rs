use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{QuestionId, ToolId};
use crate::gateway::SearchResult;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    InitialAnswer,
    InitialAnswerEdit,
    AiPrompt,
    AiResponse,
    AiComment,
    SearchQuery,
    SearchResults,
    ToolError,
    FocusLost,
    FocusRegained,
    Revision,
    FinalAnswer,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::InitialAnswer,
        EventKind::InitialAnswerEdit,
        EventKind::AiPrompt,
        EventKind::AiResponse,
        EventKind::AiComment,
        EventKind::SearchQuery,
        EventKind::SearchResults,
        EventKind::ToolError,
        EventKind::FocusLost,
        EventKind::FocusRegained,
        EventKind::Revision,
        EventKind::FinalAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::InitialAnswer => "initial_answer",
            EventKind::InitialAnswerEdit => "initial_answer_edit",
            EventKind::AiPrompt => "ai_prompt",
            EventKind::AiResponse => "ai_response",
            EventKind::AiComment => "ai_comment",
            EventKind::SearchQuery => "search_query",
            EventKind::SearchResults => "search_results",
            EventKind::ToolError => "tool_error",
            EventKind::FocusLost => "focus_lost",
            EventKind::FocusRegained => "focus_regained",
            EventKind::Revision => "revision",
            EventKind::FinalAnswer => "final_answer",
        }
    }

    pub fn is_focus(self) -> bool {
        matches!(self, EventKind::FocusLost | EventKind::FocusRegained)
    }

    /// Events that count as consulting a tool.
    pub fn is_tool_use(self) -> bool {
        matches!(self, EventKind::AiPrompt | EventKind::SearchQuery)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptPayload {
    pub tool_id: ToolId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsePayload {
    pub tool_id: ToolId,
    /// Seq of the `ai_prompt` this answers.
    pub linked_seq: u64,
    pub text: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub provider_meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommentPayload {
    /// Seq of the `ai_response` being commented on.
    pub linked_seq: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchQueryPayload {
    pub tool_id: ToolId,
    pub query: String,
    pub limit: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchResultsPayload {
    pub tool_id: ToolId,
    pub linked_seq: u64,
    pub results: Vec<SearchResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolErrorPayload {
    pub tool_id: ToolId,
    /// Seq of the failed `ai_prompt` or `search_query`.
    pub linked_seq: u64,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusPayload {
    /// Question the client reported as active, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_question: Option<QuestionId>,
    /// Client clock reading, kept verbatim and never used for ordering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevisionPayload {
    /// Seq of the `final_answer` that is being reopened.
    pub reopens_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    InitialAnswer(AnswerPayload),
    InitialAnswerEdit(AnswerPayload),
    AiPrompt(PromptPayload),
    AiResponse(ResponsePayload),
    AiComment(CommentPayload),
    SearchQuery(SearchQueryPayload),
    SearchResults(SearchResultsPayload),
    ToolError(ToolErrorPayload),
    FocusLost(FocusPayload),
    FocusRegained(FocusPayload),
    Revision(RevisionPayload),
    FinalAnswer(AnswerPayload),
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::InitialAnswer(_) => EventKind::InitialAnswer,
            EventPayload::InitialAnswerEdit(_) => EventKind::InitialAnswerEdit,
            EventPayload::AiPrompt(_) => EventKind::AiPrompt,
            EventPayload::AiResponse(_) => EventKind::AiResponse,
            EventPayload::AiComment(_) => EventKind::AiComment,
            EventPayload::SearchQuery(_) => EventKind::SearchQuery,
            EventPayload::SearchResults(_) => EventKind::SearchResults,
            EventPayload::ToolError(_) => EventKind::ToolError,
            EventPayload::FocusLost(_) => EventKind::FocusLost,
            EventPayload::FocusRegained(_) => EventKind::FocusRegained,
            EventPayload::Revision(_) => EventKind::Revision,
            EventPayload::FinalAnswer(_) => EventKind::FinalAnswer,
        }
    }

    /// The seq this event points back at, for the kinds that link.
    pub fn linked_seq(&self) -> Option<u64> {
        match self {
            EventPayload::AiResponse(p) => Some(p.linked_seq),
            EventPayload::AiComment(p) => Some(p.linked_seq),
            EventPayload::SearchResults(p) => Some(p.linked_seq),
            EventPayload::ToolError(p) => Some(p.linked_seq),
            EventPayload::Revision(p) => Some(p.reopens_seq),
            _ => None,
        }
    }

    pub fn tool_id(&self) -> Option<&ToolId> {
        match self {
            EventPayload::AiPrompt(p) => Some(&p.tool_id),
            EventPayload::AiResponse(p) => Some(&p.tool_id),
            EventPayload::SearchQuery(p) => Some(&p.tool_id),
            EventPayload::SearchResults(p) => Some(&p.tool_id),
            EventPayload::ToolError(p) => Some(&p.tool_id),
            _ => None,
        }
    }
}

/// One entry of a reasoning trace.
///
/// Question streams carry `question_id`; focus telemetry lives in a separate
/// session-scope stream with `question_id = None` and its own seq numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub ts: Timestamp,
    pub question_id: Option<QuestionId>,
    pub payload: EventPayload,
}

impl TraceEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}
