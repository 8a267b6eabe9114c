//! HTTP adapters for real chat and search providers.

use std::collections::BTreeMap;

use async_trait::async_trait;
use mindexam_core::gateway::{
    ChatProvider, ProviderError, ProviderReply, ProviderRequest, Role, SearchHit, SearchProvider,
};
use serde::Deserialize;
use serde_json::{json, Value};

fn transport(e: reqwest::Error) -> ProviderError {
    ProviderError::Transport(e.to_string())
}

async fn check_status(resp: reqwest::Response) -> Result<reqwest::Response, ProviderError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let mut message = resp.text().await.unwrap_or_default();
    message.truncate(500);
    Err(ProviderError::Status {
        status: status.as_u16(),
        message,
    })
}

/// Chat model behind an OpenAI-style `POST {endpoint}/chat/completions`.
#[derive(Debug, Clone)]
pub struct OpenAiCompatibleProvider {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl OpenAiCompatibleProvider {
    pub fn new(endpoint: String, model: String, api_key: Option<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            model,
            api_key,
        }
    }

    /// Directives go first as system messages, then the question, then the
    /// conversation with the student's turns as `user`.
    pub fn messages(request: &ProviderRequest) -> Vec<Value> {
        let mut out: Vec<Value> = request
            .directive_block
            .iter()
            .map(|d| json!({"role": "system", "content": d}))
            .collect();
        out.push(json!({"role": "system", "content": format!("Exam question:\n{}", request.question_context)}));
        for turn in &request.conversation {
            let role = match turn.role {
                Role::Student => "user",
                Role::Assistant => "assistant",
            };
            out.push(json!({"role": role, "content": turn.text}));
        }
        out
    }
}

#[derive(Deserialize)]
struct Completion {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<BTreeMap<String, Value>>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[async_trait]
impl ChatProvider for OpenAiCompatibleProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        let mut call = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .json(&json!({"model": self.model, "messages": Self::messages(request)}));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = check_status(call.send().await.map_err(transport)?).await?;
        let body: Completion = resp
            .json()
            .await
            .map_err(|e| ProviderError::Transport(format!("unreadable completion: {e}")))?;
        let choice = body
            .choices
            .into_iter()
            .next()
            .ok_or(ProviderError::EmptyResponse)?;
        let mut meta = BTreeMap::new();
        meta.insert(
            "model".to_owned(),
            body.model.unwrap_or_else(|| self.model.clone()),
        );
        if let Some(reason) = choice.finish_reason {
            meta.insert("finish_reason".to_owned(), reason);
        }
        for (k, v) in body.usage.unwrap_or_default() {
            if let Some(n) = v.as_u64() {
                meta.insert(format!("usage.{k}"), n.to_string());
            }
        }
        Ok(ProviderReply {
            text: choice.message.content.unwrap_or_default(),
            meta,
        })
    }
}

/// Search service answering `GET {endpoint}?q=..&limit=..` with
/// `{"results": [{"title", "snippet", "url"}]}`.
#[derive(Debug, Clone)]
pub struct JsonSearchProvider {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl JsonSearchProvider {
    pub fn new(endpoint: String, api_key: Option<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint,
            api_key,
        }
    }
}

#[derive(Deserialize)]
struct SearchBody {
    results: Vec<Hit>,
}

#[derive(Deserialize)]
struct Hit {
    title: String,
    #[serde(default)]
    snippet: String,
    url: String,
}

#[async_trait]
impl SearchProvider for JsonSearchProvider {
    async fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, ProviderError> {
        let mut call = self
            .client
            .get(&self.endpoint)
            .query(&[("q", query.to_owned()), ("limit", limit.to_string())]);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = check_status(call.send().await.map_err(transport)?).await?;
        let body: SearchBody = resp
            .json()
            .await
            .map_err(|e| ProviderError::Transport(format!("unreadable search response: {e}")))?;
        Ok(body
            .results
            .into_iter()
            .map(|h| SearchHit {
                title: h.title,
                snippet: h.snippet,
                url: h.url,
            })
            .collect())
    }
}
