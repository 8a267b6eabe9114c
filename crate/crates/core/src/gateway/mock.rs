//! Deterministic providers for tests and offline runs.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;

use super::{
    ChatProvider, ProviderError, ProviderReply, ProviderRequest, ProviderResponse, SearchHit,
    SearchProvider,
};

/// Echoes the request as `DIRECTIVES[d1|d2]PROMPT[last student text]`.
pub fn mock_complete(request: &ProviderRequest) -> ProviderResponse {
    ProviderResponse {
        text: mock_text(request),
        latency: Duration::ZERO,
        provider_meta: mock_meta(),
    }
}

fn mock_text(request: &ProviderRequest) -> String {
    format!(
        "DIRECTIVES[{}]PROMPT[{}]",
        request.directive_block.join("|"),
        request.last_student_text().unwrap_or_default()
    )
}

fn mock_meta() -> BTreeMap<String, String> {
    BTreeMap::from([("model".to_owned(), "mock".to_owned())])
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MockChatProvider;

#[async_trait]
impl ChatProvider for MockChatProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        Ok(ProviderReply {
            text: mock_text(request),
            meta: mock_meta(),
        })
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MockSearchProvider;

#[async_trait]
impl SearchProvider for MockSearchProvider {
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, ProviderError> {
        Ok((1..=limit)
            .map(|i| SearchHit {
                title: format!("Result {i}"),
                snippet: format!("Mock result {i} for: {query}"),
                url: format!("https://search.invalid/r/{i}"),
            })
            .collect())
    }
}

/// Replies with queued texts in order, then falls back to [`mock_complete`].
#[derive(Debug, Default)]
pub struct ScriptedChatProvider {
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedChatProvider {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
        }
    }

    pub fn push(&self, reply: impl Into<String>) {
        self.replies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push_back(reply.into());
    }
}

#[async_trait]
impl ChatProvider for ScriptedChatProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        let next = self
            .replies
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front();
        Ok(ProviderReply {
            text: next.unwrap_or_else(|| mock_text(request)),
            meta: mock_meta(),
        })
    }
}

/// Always fails with the configured error.
#[derive(Debug, Clone)]
pub struct FailingProvider(pub ProviderError);

impl FailingProvider {
    pub fn status(status: u16) -> Self {
        Self(ProviderError::Status {
            status,
            message: "mock failure".into(),
        })
    }
}

#[async_trait]
impl ChatProvider for FailingProvider {
    async fn complete(&self, _request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        Err(self.0.clone())
    }
}

#[async_trait]
impl SearchProvider for FailingProvider {
    async fn search(&self, _query: &str, _limit: usize) -> Result<Vec<SearchHit>, ProviderError> {
        Err(self.0.clone())
    }
}

/// Never answers. Stands in for an unreachable endpoint.
#[derive(Debug, Default, Clone, Copy)]
pub struct StallingProvider;

#[async_trait]
impl ChatProvider for StallingProvider {
    async fn complete(&self, _request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        std::future::pending().await
    }
}

#[async_trait]
impl SearchProvider for StallingProvider {
    async fn search(&self, _query: &str, _limit: usize) -> Result<Vec<SearchHit>, ProviderError> {
        std::future::pending().await
    }
}
