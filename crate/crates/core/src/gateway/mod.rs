//! Policy gateway: turns an instructor directive plus a student prompt into a
//! provider request, and dispatches requests to chat and search providers.
//!
//! The directive travels as a hidden instruction block that always precedes
//! the conversation. Student text is never rewritten.

mod mock;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Question, ToolDescriptor, ToolId, ToolKind, ToolPolicy};

pub use mock::{
    mock_complete, FailingProvider, MockChatProvider, MockSearchProvider, ScriptedChatProvider,
    StallingProvider,
};

pub const DEFAULT_HISTORY_DEPTH: usize = 20;
pub const DEFAULT_PROVIDER_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_SEARCH_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn student(text: impl Into<String>) -> Self {
        Self {
            role: Role::Student,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRequest {
    /// Instructor instructions, hidden from the student.
    pub directive_block: Vec<String>,
    pub question_context: String,
    pub conversation: Vec<Turn>,
    pub tool_id: ToolId,
}

impl ProviderRequest {
    pub fn last_student_text(&self) -> Option<&str> {
        self.conversation
            .iter()
            .rev()
            .find(|t| t.role == Role::Student)
            .map(|t| t.text.as_str())
    }

    /// Length-prefixed text form used for auditing and by adapters that take a
    /// single prompt string.
    ///
    /// Sections appear in a fixed order (directives, question, conversation)
    /// and texts are embedded without escaping, so every student prompt is a
    /// byte-identical substring of the output.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#directives {}", self.directive_block.len());
        for d in &self.directive_block {
            let _ = writeln!(out, "{}:{}", d.len(), d);
        }
        let _ = writeln!(
            out,
            "#question {}:{}",
            self.question_context.len(),
            self.question_context
        );
        let _ = writeln!(out, "#conversation {}", self.conversation.len());
        for t in &self.conversation {
            let role = match t.role {
                Role::Student => "student",
                Role::Assistant => "assistant",
            };
            let _ = writeln!(out, "{role} {}:{}", t.text.len(), t.text);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub latency: Duration,
    /// Model name, token counts and similar, when the provider reports them.
    pub provider_meta: BTreeMap<String, String>,
}

/// What a provider adapter hands back; latency is measured by the gateway.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rank: u32,
    pub title: String,
    pub snippet: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider returned status {status}: {message}")]
    Status { status: u16, message: String },
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("provider unreachable: {0}")]
    Transport(String),
    #[error("no provider configured for {0:?}")]
    NotConfigured(String),
}

impl ProviderError {
    pub fn code(&self) -> &'static str {
        match self {
            ProviderError::Status { .. } => "provider_status",
            ProviderError::EmptyResponse => "empty_response",
            ProviderError::Transport(_) => "provider_unreachable",
            ProviderError::NotConfigured(_) => "provider_not_configured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("tool {0} is disabled for this question")]
    ToolDisabled(ToolId),
    #[error("tool {tool} is a {} tool, expected {}", .actual.as_str(), .expected.as_str())]
    WrongToolKind {
        tool: ToolId,
        expected: ToolKind,
        actual: ToolKind,
    },
    #[error("provider did not answer within {0:?}")]
    ProviderTimeout(Duration),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::ToolDisabled(_) => "tool_disabled",
            GatewayError::WrongToolKind { .. } => "wrong_tool_kind",
            GatewayError::ProviderTimeout(_) => "provider_timeout",
            GatewayError::Provider(e) => e.code(),
        }
    }
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError>;
}

#[async_trait]
pub trait SearchProvider: Send + Sync {
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, ProviderError>;
}

/// Providers keyed by the `provider_ref` of a [`ToolDescriptor`].
#[derive(Default, Clone)]
pub struct ProviderRegistry {
    chat: HashMap<String, Arc<dyn ChatProvider>>,
    search: HashMap<String, Arc<dyn SearchProvider>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the deterministic mocks under the `mock` reference.
    pub fn with_mocks() -> Self {
        let mut r = Self::new();
        r.register_chat("mock", Arc::new(MockChatProvider));
        r.register_search("mock", Arc::new(MockSearchProvider));
        r
    }

    pub fn register_chat(
        &mut self,
        provider_ref: impl Into<String>,
        provider: Arc<dyn ChatProvider>,
    ) {
        self.chat.insert(provider_ref.into(), provider);
    }

    pub fn register_search(
        &mut self,
        provider_ref: impl Into<String>,
        provider: Arc<dyn SearchProvider>,
    ) {
        self.search.insert(provider_ref.into(), provider);
    }

    pub fn chat(&self, provider_ref: &str) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        self.chat
            .get(provider_ref)
            .cloned()
            .ok_or_else(|| ProviderError::NotConfigured(provider_ref.to_owned()))
    }

    pub fn search(&self, provider_ref: &str) -> Result<Arc<dyn SearchProvider>, ProviderError> {
        self.search
            .get(provider_ref)
            .cloned()
            .ok_or_else(|| ProviderError::NotConfigured(provider_ref.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayConfig {
    /// Prompt/response exchanges of history kept per (session, question, tool).
    pub history_depth: usize,
    pub provider_timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            history_depth: DEFAULT_HISTORY_DEPTH,
            provider_timeout: DEFAULT_PROVIDER_TIMEOUT,
        }
    }
}

/// Stateless; share freely across sessions.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gateway {
    config: GatewayConfig,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Checks that `policy` lets the student use `tool` as a `kind` tool.
    pub fn check_policy(
        tool: &ToolDescriptor,
        policy: Option<&ToolPolicy>,
        kind: ToolKind,
    ) -> Result<(), GatewayError> {
        match policy {
            Some(p) if p.enabled && p.tool_id == tool.tool_id => {}
            _ => return Err(GatewayError::ToolDisabled(tool.tool_id.clone())),
        }
        if tool.kind != kind {
            return Err(GatewayError::WrongToolKind {
                tool: tool.tool_id.clone(),
                expected: kind,
                actual: tool.kind,
            });
        }
        Ok(())
    }

    /// Builds the request for one student prompt. Pure: equal inputs give
    /// equal requests.
    pub fn compose_request(
        &self,
        tool: &ToolDescriptor,
        policy: &ToolPolicy,
        question: &Question,
        history: &[Turn],
        student_prompt: &str,
    ) -> Result<ProviderRequest, GatewayError> {
        Self::check_policy(tool, Some(policy), ToolKind::ChatModel)?;

        let directive_block = policy
            .directive
            .effective_instruction()
            .map(|text| vec![text.to_owned()])
            .unwrap_or_default();

        let keep = self.config.history_depth.saturating_mul(2);
        let skip = history.len().saturating_sub(keep);
        let mut conversation: Vec<Turn> = history[skip..].to_vec();
        conversation.push(Turn::student(student_prompt));

        Ok(ProviderRequest {
            directive_block,
            question_context: question_context(question),
            conversation,
            tool_id: tool.tool_id.clone(),
        })
    }

    pub async fn dispatch_chat(
        &self,
        request: &ProviderRequest,
        provider: &dyn ChatProvider,
    ) -> Result<ProviderResponse, GatewayError> {
        let started = Instant::now();
        let reply = tokio::time::timeout(self.config.provider_timeout, provider.complete(request))
            .await
            .map_err(|_| GatewayError::ProviderTimeout(self.config.provider_timeout))??;
        if reply.text.is_empty() {
            return Err(ProviderError::EmptyResponse.into());
        }
        Ok(ProviderResponse {
            text: reply.text,
            latency: started.elapsed(),
            provider_meta: reply.meta,
        })
    }

    pub async fn dispatch_search(
        &self,
        query: &str,
        provider: &dyn SearchProvider,
        limit: usize,
    ) -> Result<Vec<SearchResult>, GatewayError> {
        if limit == 0 {
            return Ok(Vec::new());
        }
        let hits =
            tokio::time::timeout(self.config.provider_timeout, provider.search(query, limit))
                .await
                .map_err(|_| GatewayError::ProviderTimeout(self.config.provider_timeout))??;
        Ok(hits
            .into_iter()
            .take(limit)
            .zip(1u32..)
            .map(|(hit, rank)| SearchResult {
                rank,
                title: hit.title,
                snippet: hit.snippet,
                url: hit.url,
            })
            .collect())
    }
}

fn question_context(question: &Question) -> String {
    let mut ctx = question.body.clone();
    for (name, blob) in &question.attachments {
        let _ = write!(ctx, "\n\n[attachment: {name}]\n{blob}");
    }
    if let Some(answer) = &question.instructor_answer {
        let _ = write!(ctx, "\n\n[instructor answer]\n{answer}");
    }
    ctx
}
