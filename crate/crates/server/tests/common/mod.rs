#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mindexam::api::{self, AppState};
use mindexam::cli::build_state;
use mindexam::config::ServerConfig;
use mindexam_core::time::{parse_ts, ManualClock, Timestamp};
use mindexam_core::{MemoryStore, TraceStore};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const PROF: &str = "prof-w-token-0123456789abcdef";
pub const OTHER_PROF: &str = "prof-x-token-0123456789abcdef";

pub fn config() -> ServerConfig {
    ServerConfig::parse(&format!(
        r#"
base_url = "http://exam.test"

[[instructors]]
id = "prof-w"
token = "{PROF}"

[[instructors]]
id = "prof-x"
token = "{OTHER_PROF}"
"#
    ))
    .unwrap()
}

pub fn core_fixture(rel: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn config_json(name: &str) -> Value {
    serde_json::from_str(&core_fixture(&format!("configs/{name}.json"))).unwrap()
}

pub fn trace_fixture(name: &str) -> String {
    core_fixture(&format!("traces/{name}.ndjson"))
}

/// `HH:MM:SS` on the exam day, UTC.
pub fn at(hms: &str) -> Timestamp {
    parse_ts(&format!("2025-12-03T{hms}Z")).unwrap()
}

pub struct Resp {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub text: String,
}

impl Resp {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text))
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"]
            .as_str()
            .unwrap_or_default()
            .to_owned()
    }
}

pub struct App {
    pub router: Router,
    pub clock: Arc<ManualClock>,
    pub state: Arc<AppState>,
}

impl App {
    pub fn new() -> Self {
        Self::with_store(Arc::new(MemoryStore::new()))
    }

    pub fn with_store(store: Arc<dyn TraceStore>) -> Self {
        let clock = Arc::new(ManualClock::new(at("18:30:00")));
        let state = build_state(&config(), store, clock.clone()).unwrap();
        Self {
            router: api::router(state.clone()),
            clock,
            state,
        }
    }

    pub async fn send(
        &self,
        method: Method,
        path: &str,
        token: Option<&str>,
        body: Option<String>,
        headers: &[(&str, &str)],
    ) -> Resp {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Resp {
            status,
            headers,
            text: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    pub async fn get(&self, path: &str, token: &str) -> Resp {
        self.send(Method::GET, path, Some(token), None, &[]).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> Resp {
        self.send(Method::POST, path, Some(token), Some(body.to_string()), &[])
            .await
    }

    pub async fn create_exam(&self, name: &str) -> String {
        let r = self.post("/exams", PROF, config_json(name)).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        r.json()["exam_id"].as_str().unwrap().to_owned()
    }

    /// Link tokens by student id.
    pub async fn links(&self, exam: &str) -> Vec<(String, String)> {
        let r = self
            .post(&format!("/exams/{exam}/links"), PROF, json!({}))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        r.json()["links"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| {
                (
                    l["student_id"].as_str().unwrap().to_owned(),
                    l["token"].as_str().unwrap().to_owned(),
                )
            })
            .collect()
    }

    pub async fn link_for(&self, exam: &str, student: &str) -> String {
        self.links(exam)
            .await
            .into_iter()
            .find(|(s, _)| s == student)
            .unwrap()
            .1
    }

    /// Opens a session for `student`, returning (session id, session token).
    pub async fn open(&self, exam: &str, student: &str) -> (String, String) {
        let link = self.link_for(exam, student).await;
        let r = self
            .post(&format!("/exams/{exam}/sessions"), &link, json!({}))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        let v = r.json();
        (
            v["session_id"].as_str().unwrap().to_owned(),
            v["session_token"].as_str().unwrap().to_owned(),
        )
    }

    pub fn tick(&self, secs: i64) {
        self.clock.advance(chrono::Duration::seconds(secs));
    }
}

pub fn q(session: &str, question: &str, action: &str) -> String {
    format!("/sessions/{session}/questions/{question}/{action}")
}
