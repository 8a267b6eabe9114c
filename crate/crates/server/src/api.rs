//! HTTP routes. See `docs/api.md` for the reference.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::middleware;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mindexam_core::analytics::write_score_report;
use mindexam_core::domain::{
    validate_exam_config, Exam, ExamId, InstructorId, QuestionId, RubricDimension, SessionId,
    StudentId, ToolId, ToolKind,
};
use mindexam_core::session::{FocusKind, Session, SessionEngine, SessionError, TraceEvent};
use mindexam_core::store::LinkGrant;
use mindexam_core::time::{Clock, Timestamp};
use mindexam_core::token::{token_digest, AccessToken};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::idempotency::{self, IdempotencyCache};

pub const DEFAULT_SEARCH_LIMIT: u32 = 5;

pub struct AppState {
    pub engine: Arc<SessionEngine>,
    pub clock: Arc<dyn Clock>,
    pub base_url: String,
    pub idempotency: IdempotencyCache,
    /// Instructor credentials keyed by token digest.
    instructors: HashMap<String, InstructorId>,
    /// Secure-link grants keyed by token digest.
    links: RwLock<HashMap<String, LinkGrant>>,
}

impl AppState {
    pub fn new(
        engine: Arc<SessionEngine>,
        clock: Arc<dyn Clock>,
        instructor_tokens: HashMap<String, InstructorId>,
        base_url: impl Into<String>,
    ) -> Result<Self, SessionError> {
        let links = engine
            .store()
            .links()?
            .into_iter()
            .map(|g| (g.token_hash.clone(), g))
            .collect();
        Ok(Self {
            engine,
            clock,
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            idempotency: IdempotencyCache::default(),
            instructors: instructor_tokens
                .into_iter()
                .map(|(token, id)| (token_digest(&token), id))
                .collect(),
            links: RwLock::new(links),
        })
    }

    fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn link(&self, digest: &str) -> Option<LinkGrant> {
        self.links
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(digest)
            .cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/exams", post(create_exam).get(list_exams))
        .route("/exams/{exam_id}", get(get_exam))
        .route("/exams/{exam_id}/links", post(issue_links))
        .route("/exams/{exam_id}/sessions", post(open_session))
        .route("/exams/{exam_id}/traces", post(import_trace))
        .route("/exams/{exam_id}/analytics", get(analytics))
        .route("/sessions/{session_id}", get(session_view))
        .route("/sessions/{session_id}/trace", get(session_trace))
        .route("/sessions/{session_id}/focus", post(focus))
        .route(
            "/sessions/{session_id}/questions/{question_id}/initial",
            post(initial),
        )
        .route(
            "/sessions/{session_id}/questions/{question_id}/ai",
            post(ask_ai),
        )
        .route(
            "/sessions/{session_id}/questions/{question_id}/search",
            post(search),
        )
        .route(
            "/sessions/{session_id}/questions/{question_id}/comment",
            post(comment),
        )
        .route(
            "/sessions/{session_id}/questions/{question_id}/final",
            post(final_answer),
        )
        .route(
            "/sessions/{session_id}/questions/{question_id}/rubric",
            post(rubric),
        )
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .layer(middleware::from_fn_with_state(
            state.clone(),
            idempotency::middleware,
        ))
        .with_state(state)
}

// ---------- authentication ----------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Principal {
    Instructor(InstructorId),
    /// A student holding a secure link (`session` unset) or a session token.
    Student {
        student_id: StudentId,
        exam_id: ExamId,
        session: Option<SessionId>,
    },
}

impl FromRequestParts<Arc<AppState>> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &Arc<AppState>,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(ApiError::unauthenticated)?;
        let digest = token_digest(token);
        if let Some(id) = state.instructors.get(&digest) {
            return Ok(Principal::Instructor(id.clone()));
        }
        if let Some(grant) = state.link(&digest) {
            return Ok(Principal::Student {
                session: state.engine.session_of(&grant.exam_id, &grant.student_id),
                student_id: grant.student_id,
                exam_id: grant.exam_id,
            });
        }
        if let Some(s) = state.engine.session_for_token(token) {
            return Ok(Principal::Student {
                student_id: s.student_id,
                exam_id: s.exam_id,
                session: Some(s.session_id),
            });
        }
        Err(ApiError::unauthenticated())
    }
}

fn exam_or_404(state: &AppState, id: &ExamId) -> Result<Arc<Exam>, ApiError> {
    state
        .engine
        .exam(id)
        .ok_or_else(|| SessionError::UnknownExam(id.clone()).into())
}

fn session_or_404(state: &AppState, id: &SessionId) -> Result<Session, ApiError> {
    state
        .engine
        .session(id)
        .ok_or_else(|| SessionError::UnknownSession(id.clone()).into())
}

/// The instructor must author the exam.
fn require_author(principal: &Principal, exam: &Exam) -> Result<InstructorId, ApiError> {
    match principal {
        Principal::Instructor(id) if exam.authors.contains(id) => Ok(id.clone()),
        Principal::Instructor(_) => Err(ApiError::forbidden("only the exam's authors may do this")),
        Principal::Student { .. } => Err(ApiError::forbidden("instructors only")),
    }
}

/// The student must own the session.
fn require_owner(principal: &Principal, session: &Session) -> Result<(), ApiError> {
    match principal {
        Principal::Student {
            student_id,
            exam_id,
            ..
        } if *student_id == session.student_id && *exam_id == session.exam_id => Ok(()),
        Principal::Student { .. } => Err(ApiError::forbidden("not your session")),
        Principal::Instructor(_) => Err(ApiError::forbidden("students only")),
    }
}

/// Owner or one of the exam's authors.
fn require_viewer(
    state: &AppState,
    principal: &Principal,
    session: &Session,
) -> Result<(), ApiError> {
    match principal {
        Principal::Student { .. } => require_owner(principal, session),
        Principal::Instructor(_) => {
            require_author(principal, &*exam_or_404(state, &session.exam_id)?).map(|_| ())
        }
    }
}

// ---------- bodies ----------

fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::invalid_body(format!("invalid request body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextBody {
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AskBody {
    #[serde(alias = "toolId")]
    tool_id: ToolId,
    prompt: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchBody {
    #[serde(alias = "toolId")]
    tool_id: ToolId,
    query: String,
    #[serde(default)]
    limit: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommentBody {
    #[serde(alias = "responseSeq")]
    response_seq: u64,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FocusBody {
    kind: FocusKind,
    #[serde(default, alias = "questionId")]
    question_id: Option<QuestionId>,
    #[serde(default, alias = "clientTs")]
    client_ts: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricBody {
    levels: BTreeMap<String, u8>,
    #[serde(default)]
    notes: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LinksBody {
    #[serde(default)]
    students: Option<Vec<StudentId>>,
}

#[derive(Serialize)]
struct EventsResponse {
    events: Vec<TraceEvent>,
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

fn events(events: Vec<TraceEvent>) -> Response {
    created(EventsResponse { events })
}

// ---------- exams ----------

async fn create_exam(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    body: Bytes,
) -> Result<Response, ApiError> {
    let Principal::Instructor(me) = &principal else {
        return Err(ApiError::forbidden("instructors only"));
    };
    let doc: Value = parse_body(&body)?;
    let exam = validate_exam_config(&doc).map_err(SessionError::Validation)?;
    if !exam.authors.contains(me) {
        return Err(ApiError::forbidden(
            "you must be listed in the exam's authors",
        ));
    }
    let exam = state.engine.register_exam(exam)?;
    Ok(created(json!({ "exam_id": exam.exam_id })))
}

async fn list_exams(
    State(state): State<Arc<AppState>>,
    principal: Principal,
) -> Result<Response, ApiError> {
    let Principal::Instructor(me) = &principal else {
        return Err(ApiError::forbidden("instructors only"));
    };
    let mut exams: Vec<Value> = state
        .engine
        .exams()
        .iter()
        .filter(|e| e.authors.contains(me))
        .map(|e| json!({"exam_id": e.exam_id, "title": e.title}))
        .collect();
    exams.sort_by(|a, b| a["exam_id"].as_str().cmp(&b["exam_id"].as_str()));
    Ok(Json(json!({ "exams": exams })).into_response())
}

/// What a student sees of an exam: no directives, no provider wiring.
fn student_view(exam: &Exam) -> Value {
    let tools: HashMap<&ToolId, &mindexam_core::domain::ToolDescriptor> =
        exam.tool_registry.iter().map(|t| (&t.tool_id, t)).collect();
    let questions: Vec<Value> = exam
        .questions
        .iter()
        .map(|q| {
            let enabled: Vec<Value> = q
                .enabled_tools()
                .filter_map(|id| tools.get(id))
                .map(|t| {
                    json!({
                        "tool_id": t.tool_id,
                        "kind": match t.kind { ToolKind::ChatModel => "chat_model", ToolKind::SearchEngine => "search_engine" },
                        "display_name": t.display_name,
                    })
                })
                .collect();
            json!({
                "question_id": q.question_id,
                "body": q.body,
                "attachments": q.attachments,
                "weight": q.weight,
                "instructor_answer": q.instructor_answer,
                "tools": enabled,
            })
        })
        .collect();
    json!({
        "exam_id": exam.exam_id,
        "title": exam.title,
        "opens_at": mindexam_core::time::format_ts(&exam.opens_at),
        "closes_at": mindexam_core::time::format_ts(&exam.closes_at),
        "questions": questions,
    })
}

async fn get_exam(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(exam_id): Path<ExamId>,
) -> Result<Response, ApiError> {
    if let Principal::Student { exam_id: mine, .. } = &principal {
        if *mine != exam_id {
            return Err(ApiError::forbidden("your link is for another exam"));
        }
    }
    let exam = exam_or_404(&state, &exam_id)?;
    match principal {
        Principal::Instructor(_) => {
            require_author(&principal, &exam)?;
            Ok(Json(serde_json::to_value(&*exam).unwrap_or(Value::Null)).into_response())
        }
        Principal::Student { .. } => Ok(Json(student_view(&exam)).into_response()),
    }
}

async fn issue_links(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(exam_id): Path<ExamId>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let exam = exam_or_404(&state, &exam_id)?;
    require_author(&principal, &exam)?;
    let req: LinksBody = if body.is_empty() {
        LinksBody::default()
    } else {
        parse_body(&body)?
    };
    let students: Vec<StudentId> = match req.students {
        Some(list) => {
            if let Some(s) = list.iter().find(|s| !exam.enrolled_students.contains(*s)) {
                return Err(SessionError::NotEnrolled(s.clone()).into());
            }
            list
        }
        None => exam.enrolled_students.iter().cloned().collect(),
    };
    let now = state.now();
    let mut out = Vec::with_capacity(students.len());
    for student in students {
        let token = AccessToken::generate();
        let grant = LinkGrant {
            token_hash: token.digest(),
            exam_id: exam_id.clone(),
            student_id: student.clone(),
            issued_at: now,
        };
        state
            .engine
            .store()
            .put_link(&grant)
            .map_err(SessionError::from)?;
        state
            .links
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(grant.token_hash.clone(), grant);
        out.push(json!({
            "student_id": student,
            "token": token.as_str(),
            "url": format!("{}/exam/{}?token={}", state.base_url, exam_id, token.as_str()),
        }));
    }
    Ok(created(json!({ "exam_id": exam_id, "links": out })))
}

async fn open_session(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(exam_id): Path<ExamId>,
) -> Result<Response, ApiError> {
    let Principal::Student {
        student_id,
        exam_id: mine,
        ..
    } = &principal
    else {
        return Err(ApiError::forbidden(
            "open a session with the student's secure link",
        ));
    };
    if *mine != exam_id {
        return Err(ApiError::forbidden("your link is for another exam"));
    }
    let (session, token) = state
        .engine
        .open_session(student_id, &exam_id, state.now())
        .await?;
    Ok(created(json!({
        "session_id": session.session_id,
        "exam_id": session.exam_id,
        "student_id": session.student_id,
        "session_token": token.as_str(),
    })))
}

async fn import_trace(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(exam_id): Path<ExamId>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let exam = exam_or_404(&state, &exam_id)?;
    require_author(&principal, &exam)?;
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::invalid_body("trace documents are UTF-8"))?;
    let header_exam = text
        .lines()
        .next()
        .and_then(|l| serde_json::from_str::<Value>(l).ok())
        .and_then(|h| h.get("exam_id").and_then(Value::as_str).map(str::to_owned));
    if header_exam
        .as_deref()
        .is_some_and(|e| e != exam_id.as_str())
    {
        return Err(ApiError::invalid_body(
            "trace header names a different exam",
        ));
    }
    let id = state.engine.import_trace(text).await?;
    Ok(created(json!({ "session_id": id })))
}

#[derive(Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    question_id: Option<QuestionId>,
}

async fn analytics(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(exam_id): Path<ExamId>,
    Query(q): Query<FormatQuery>,
) -> Result<Response, ApiError> {
    let exam = exam_or_404(&state, &exam_id)?;
    require_author(&principal, &exam)?;
    let summary = state.engine.analytics_summary(&exam_id)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(summary).into_response()),
        Some("tsv") => {
            let mut out = Vec::new();
            write_score_report(&exam, &summary, &mut out)
                .map_err(|e| SessionError::StorageFailure(e.to_string()))?;
            Ok((
                [(
                    header::CONTENT_TYPE,
                    "text/tab-separated-values; charset=utf-8",
                )],
                out,
            )
                .into_response())
        }
        Some(other) => Err(ApiError::invalid_body(format!(
            "unknown format {other:?}; use json or tsv"
        ))),
    }
}

// ---------- sessions ----------

async fn session_view(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(session_id): Path<SessionId>,
) -> Result<Response, ApiError> {
    let session = session_or_404(&state, &session_id)?;
    require_viewer(&state, &principal, &session)?;
    Ok(Json(state.engine.view(&session_id).await?).into_response())
}

async fn session_trace(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(session_id): Path<SessionId>,
    Query(q): Query<FormatQuery>,
) -> Result<Response, ApiError> {
    let session = session_or_404(&state, &session_id)?;
    let exam = exam_or_404(&state, &session.exam_id)?;
    require_author(&principal, &exam)?;
    match q.format.as_deref() {
        Some("ndjson") => {
            if q.question_id.is_some() {
                return Err(ApiError::invalid_body(
                    "ndjson export always covers the whole session",
                ));
            }
            let text = state.engine.export_trace(&session_id)?;
            Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
        }
        None | Some("json") => {
            if let Some(qid) = &q.question_id {
                if exam.question(qid).is_none() {
                    return Err(SessionError::UnknownQuestion(qid.clone()).into());
                }
            }
            let events = state
                .engine
                .load_trace(&session_id, q.question_id.as_ref())?;
            Ok(Json(json!({ "session_id": session_id, "events": events })).into_response())
        }
        Some(other) => Err(ApiError::invalid_body(format!(
            "unknown format {other:?}; use json or ndjson"
        ))),
    }
}

async fn student_session(
    state: &AppState,
    principal: &Principal,
    session_id: &SessionId,
) -> Result<Session, ApiError> {
    let session = session_or_404(state, session_id)?;
    require_owner(principal, &session)?;
    Ok(session)
}

async fn initial(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path((session_id, question_id)): Path<(SessionId, QuestionId)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    student_session(&state, &principal, &session_id).await?;
    let b: TextBody = parse_body(&body)?;
    let ev = state
        .engine
        .submit_initial_answer(&session_id, &question_id, &b.text, state.now())
        .await?;
    Ok(events(vec![ev]))
}

async fn ask_ai(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path((session_id, question_id)): Path<(SessionId, QuestionId)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    student_session(&state, &principal, &session_id).await?;
    let b: AskBody = parse_body(&body)?;
    let out = state
        .engine
        .ask_ai(
            &session_id,
            &question_id,
            &b.tool_id,
            &b.prompt,
            state.now(),
        )
        .await?;
    Ok(events(out.events().into_iter().cloned().collect()))
}

async fn search(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path((session_id, question_id)): Path<(SessionId, QuestionId)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    student_session(&state, &principal, &session_id).await?;
    let b: SearchBody = parse_body(&body)?;
    let out = state
        .engine
        .search(
            &session_id,
            &question_id,
            &b.tool_id,
            &b.query,
            b.limit.unwrap_or(DEFAULT_SEARCH_LIMIT),
            state.now(),
        )
        .await?;
    Ok(events(out.events().into_iter().cloned().collect()))
}

async fn comment(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path((session_id, question_id)): Path<(SessionId, QuestionId)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    student_session(&state, &principal, &session_id).await?;
    let b: CommentBody = parse_body(&body)?;
    let ev = state
        .engine
        .comment_on_output(
            &session_id,
            &question_id,
            b.response_seq,
            &b.text,
            state.now(),
        )
        .await?;
    Ok(events(vec![ev]))
}

async fn final_answer(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path((session_id, question_id)): Path<(SessionId, QuestionId)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    student_session(&state, &principal, &session_id).await?;
    let b: TextBody = parse_body(&body)?;
    let evs = state
        .engine
        .submit_final_answer(&session_id, &question_id, &b.text, state.now())
        .await?;
    Ok(events(evs))
}

async fn focus(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path(session_id): Path<SessionId>,
    body: Bytes,
) -> Result<Response, ApiError> {
    student_session(&state, &principal, &session_id).await?;
    let b: FocusBody = parse_body(&body)?;
    let ev = state
        .engine
        .record_focus_event(
            &session_id,
            b.kind,
            b.question_id.as_ref(),
            b.client_ts,
            state.now(),
        )
        .await?;
    Ok(events(vec![ev]))
}

async fn rubric(
    State(state): State<Arc<AppState>>,
    principal: Principal,
    Path((session_id, question_id)): Path<(SessionId, QuestionId)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let session = session_or_404(&state, &session_id)?;
    let exam = exam_or_404(&state, &session.exam_id)?;
    let assessor = require_author(&principal, &exam)?;
    let b: RubricBody = parse_body(&body)?;
    let mut levels = [0u8; 5];
    let mut seen = 0;
    for (name, level) in &b.levels {
        let dim = RubricDimension::parse(name)
            .ok_or_else(|| ApiError::invalid_body(format!("unknown rubric dimension {name:?}")))?;
        levels[dim.index()] = *level;
        seen += 1;
    }
    if seen != RubricDimension::ALL.len() {
        return Err(ApiError::invalid_body(
            "levels must give all five dimensions",
        ));
    }
    let score = state
        .engine
        .score_rubric(
            &session_id,
            &question_id,
            levels,
            &assessor,
            &b.notes,
            state.now(),
        )
        .await?;
    Ok(created(score))
}
