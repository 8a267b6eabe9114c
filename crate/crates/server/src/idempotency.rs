//! Replay cache for client request ids.
//!
//! A mutating request carrying `X-Request-Id` is executed at most once per
//! (caller, method, path, id). Repeats get the stored response; a repeat with
//! a different body is refused. Responses with a 5xx status are not stored,
//! so a retry after a storage failure runs again.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use sha2::{Digest, Sha256};

use crate::api::AppState;
use crate::error::ApiError;

pub const REQUEST_ID_HEADER: &str = "x-request-id";
pub const REPLAYED_HEADER: &str = "x-idempotent-replay";

/// Largest request body accepted anywhere in the API.
pub const MAX_BODY: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    caller: String,
    method: Method,
    path: String,
    request_id: String,
}

#[derive(Debug, Clone)]
struct Stored {
    body_hash: String,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Stored>>>;

#[derive(Default)]
pub struct IdempotencyCache {
    slots: Mutex<HashMap<Key, Slot>>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl IdempotencyCache {
    fn slot(&self, key: Key) -> Slot {
        let mut slots = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        slots.entry(key).or_default().clone()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn replay(stored: &Stored) -> Response {
    let mut resp = (stored.status, stored.body.clone()).into_response();
    if let Some(ct) = &stored.content_type {
        resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
    }
    resp.headers_mut()
        .insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
    resp
}

pub async fn middleware(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if req.method() != Method::POST {
        return next.run(req).await;
    }
    let Some(request_id) = req
        .headers()
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
    else {
        return next.run(req).await;
    };
    if request_id.is_empty() || request_id.len() > 200 {
        return ApiError::invalid_body("X-Request-Id must be 1 to 200 characters").into_response();
    }
    // the caller is identified by its credential; unauthenticated calls are
    // rejected downstream and never cached
    let Some(auth) = req
        .headers()
        .get(header::AUTHORIZATION)
        .map(|v| digest(v.as_bytes()))
    else {
        return next.run(req).await;
    };

    let (parts, body) = req.into_parts();
    let bytes = match axum::body::to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(_) => {
            return ApiError::invalid_body("request body too large or unreadable").into_response()
        }
    };
    let body_hash = digest(&bytes);
    let key = Key {
        caller: auth,
        method: parts.method.clone(),
        path: parts.uri.path().to_owned(),
        request_id,
    };
    let slot = state.idempotency.slot(key);
    let mut guard = slot.lock().await;
    if let Some(stored) = &*guard {
        if stored.body_hash != body_hash {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "request_id_reused",
                "X-Request-Id was already used with a different body",
            )
            .into_response();
        }
        return replay(stored);
    }

    let resp = next
        .run(Request::from_parts(parts, Body::from(bytes)))
        .await;
    let (parts, body) = resp.into_parts();
    let body = match axum::body::to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(_) => return StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    };
    if !parts.status.is_server_error() {
        *guard = Some(Stored {
            body_hash,
            status: parts.status,
            content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
            body: body.clone(),
        });
    }
    Response::from_parts(parts, Body::from(body))
}
