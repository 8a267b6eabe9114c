use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use chrono::Duration as ChronoDuration;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use super::event::*;
use super::replay::{Invariant, QuestionProgress, QuestionState, StreamScope, StreamValidator};
use super::{Session, SessionError};
use crate::analytics::{self, ExamAnalytics, RubricScore, SessionData};
use crate::domain::{
    Exam, ExamId, InstructorId, QuestionId, SessionId, StudentId, ToolId, ToolKind,
};
use crate::gateway::{Gateway, GatewayError, ProviderRegistry, Turn};
use crate::store::{document, DocumentError, StoreError, StoredEventRecord, TraceStore};
use crate::time::{truncate_ms, Timestamp};
use crate::token::{token_digest, AccessToken};

/// Upper bound on results requested per search.
pub const MAX_SEARCH_LIMIT: u32 = 50;

/// How often an append is retried after losing a seq race to another writer.
const APPEND_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusKind {
    FocusLost,
    FocusRegained,
}

/// Events appended by one `ask_ai` or `search` call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AskOutcome {
    /// Present when the question was finalized and had to be reopened.
    pub revision: Option<TraceEvent>,
    pub request: TraceEvent,
    /// `ai_response` / `search_results`, or `tool_error` when the provider failed.
    pub reply: TraceEvent,
}

impl AskOutcome {
    pub fn events(&self) -> Vec<&TraceEvent> {
        self.revision
            .iter()
            .chain([&self.request, &self.reply])
            .collect()
    }

    pub fn failed(&self) -> bool {
        self.reply.kind() == EventKind::ToolError
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub exam_id: ExamId,
    pub student_id: StudentId,
    pub questions: BTreeMap<QuestionId, QuestionProgress>,
}

struct Stream {
    validator: StreamValidator,
    events: Vec<TraceEvent>,
}

impl Stream {
    fn new(scope: StreamScope) -> Self {
        Self {
            validator: StreamValidator::new(scope),
            events: Vec::new(),
        }
    }

    fn scope_for(question: &Option<QuestionId>) -> StreamScope {
        if question.is_some() {
            StreamScope::Question
        } else {
            StreamScope::Focus
        }
    }
}

struct SessionSlot {
    session: Session,
    exam: Arc<Exam>,
    /// One stream per question plus the focus stream under `None`. Each mutex
    /// is the single-writer lock for its stream and is held across provider
    /// calls so that a prompt and its reply are adjacent.
    streams: HashMap<Option<QuestionId>, Mutex<Stream>>,
}

impl SessionSlot {
    fn new(session: Session, exam: Arc<Exam>) -> Self {
        let mut streams = HashMap::new();
        for q in &exam.questions {
            streams.insert(
                Some(q.question_id.clone()),
                Mutex::new(Stream::new(StreamScope::Question)),
            );
        }
        streams.insert(None, Mutex::new(Stream::new(StreamScope::Focus)));
        Self {
            session,
            exam,
            streams,
        }
    }

    fn stream(&self, question: &QuestionId) -> Result<&Mutex<Stream>, SessionError> {
        self.streams
            .get(&Some(question.clone()))
            .ok_or_else(|| SessionError::UnknownQuestion(question.clone()))
    }
}

#[derive(Default)]
struct Registry {
    exams: HashMap<ExamId, Arc<Exam>>,
    sessions: HashMap<SessionId, Arc<SessionSlot>>,
    by_student: HashMap<(ExamId, StudentId), SessionId>,
    by_token: HashMap<String, SessionId>,
}

/// Runs exam sessions on top of a [`TraceStore`].
///
/// Distinct sessions and distinct questions proceed concurrently; operations
/// on one (session, question) stream are serialized.
pub struct SessionEngine {
    store: Arc<dyn TraceStore>,
    gateway: Gateway,
    providers: ProviderRegistry,
    registry: RwLock<Registry>,
    open_lock: Mutex<()>,
}

impl SessionEngine {
    /// Loads every stored exam and session and replays their traces.
    pub fn new(
        store: Arc<dyn TraceStore>,
        gateway: Gateway,
        providers: ProviderRegistry,
    ) -> Result<Self, SessionError> {
        let engine = Self {
            store,
            gateway,
            providers,
            registry: RwLock::new(Registry::default()),
            open_lock: Mutex::new(()),
        };
        {
            let mut reg = engine.registry.write().unwrap_or_else(|e| e.into_inner());
            for exam in engine.store.exams()? {
                reg.exams.insert(exam.exam_id.clone(), Arc::new(exam));
            }
        }
        for session in engine.store.sessions()? {
            engine.restore_session(session)?;
        }
        Ok(engine)
    }

    pub fn store(&self) -> &Arc<dyn TraceStore> {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn registry(&self) -> std::sync::RwLockReadGuard<'_, Registry> {
        self.registry.read().unwrap_or_else(|e| e.into_inner())
    }

    fn registry_mut(&self) -> std::sync::RwLockWriteGuard<'_, Registry> {
        self.registry.write().unwrap_or_else(|e| e.into_inner())
    }

    fn restore_session(&self, session: Session) -> Result<Arc<SessionSlot>, SessionError> {
        let exam = self
            .exam(&session.exam_id)
            .ok_or_else(|| SessionError::UnknownExam(session.exam_id.clone()))?;
        let slot = SessionSlot::new(session.clone(), exam);
        for record in self.store.load_trace(&session.session_id, None)? {
            let key = record.event.question_id.clone();
            let stream = slot.streams.get(&key).ok_or_else(|| {
                SessionError::CorruptTrace(format!(
                    "session {} has events for unknown question {:?}",
                    session.session_id, key
                ))
            })?;
            let mut stream = stream.try_lock().expect("slot is not shared yet");
            stream.validator.push(&record.event).map_err(|v| {
                SessionError::CorruptTrace(format!("session {}: {v}", session.session_id))
            })?;
            stream.events.push(record.event);
        }
        let slot = Arc::new(slot);
        let mut reg = self.registry_mut();
        reg.by_student.insert(
            (session.exam_id.clone(), session.student_id.clone()),
            session.session_id.clone(),
        );
        reg.by_token
            .insert(session.token_hash.clone(), session.session_id.clone());
        reg.sessions
            .insert(session.session_id.clone(), slot.clone());
        Ok(slot)
    }

    pub fn register_exam(&self, exam: Exam) -> Result<Arc<Exam>, SessionError> {
        let exam = Arc::new(exam);
        let mut reg = self.registry_mut();
        if reg.exams.contains_key(&exam.exam_id) {
            return Err(SessionError::ExamExists(exam.exam_id.clone()));
        }
        self.store.put_exam(&exam)?;
        reg.exams.insert(exam.exam_id.clone(), exam.clone());
        Ok(exam)
    }

    pub fn exam(&self, id: &ExamId) -> Option<Arc<Exam>> {
        self.registry().exams.get(id).cloned()
    }

    pub fn exams(&self) -> Vec<Arc<Exam>> {
        self.registry().exams.values().cloned().collect()
    }

    pub fn session(&self, id: &SessionId) -> Option<Session> {
        self.registry().sessions.get(id).map(|s| s.session.clone())
    }

    pub fn session_for_token(&self, token: &str) -> Option<Session> {
        let reg = self.registry();
        let id = reg.by_token.get(&token_digest(token))?;
        reg.sessions.get(id).map(|s| s.session.clone())
    }

    pub fn session_of(&self, exam: &ExamId, student: &StudentId) -> Option<SessionId> {
        self.registry()
            .by_student
            .get(&(exam.clone(), student.clone()))
            .cloned()
    }

    fn slot(&self, id: &SessionId) -> Result<Arc<SessionSlot>, SessionError> {
        self.registry()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.clone()))
    }

    fn check_window(exam: &Exam, now: Timestamp) -> Result<(), SessionError> {
        if now < exam.opens_at {
            Err(SessionError::ExamNotOpen)
        } else if now >= exam.closes_at {
            Err(SessionError::ExamClosed)
        } else {
            Ok(())
        }
    }

    pub async fn open_session(
        &self,
        student: &StudentId,
        exam_id: &ExamId,
        now: Timestamp,
    ) -> Result<(Session, AccessToken), SessionError> {
        let _guard = self.open_lock.lock().await;
        let exam = self
            .exam(exam_id)
            .ok_or_else(|| SessionError::UnknownExam(exam_id.clone()))?;
        if !exam.enrolled_students.contains(student) {
            return Err(SessionError::NotEnrolled(student.clone()));
        }
        Self::check_window(&exam, now)?;
        if let Some(existing) = self.session_of(exam_id, student) {
            return Err(SessionError::SessionExists(existing));
        }
        let token = AccessToken::generate();
        let session = Session {
            session_id: SessionId::new(uuid::Uuid::new_v4().to_string()),
            exam_id: exam_id.clone(),
            student_id: student.clone(),
            created_at: truncate_ms(now),
            token_hash: token.digest(),
        };
        self.store.create_session(&session)?;
        let slot = Arc::new(SessionSlot::new(session.clone(), exam));
        let mut reg = self.registry_mut();
        reg.by_student.insert(
            (exam_id.clone(), student.clone()),
            session.session_id.clone(),
        );
        reg.by_token
            .insert(session.token_hash.clone(), session.session_id.clone());
        reg.sessions.insert(session.session_id.clone(), slot);
        Ok((session, token))
    }

    pub async fn view(&self, session: &SessionId) -> Result<SessionView, SessionError> {
        let slot = self.slot(session)?;
        let mut questions = BTreeMap::new();
        for q in &slot.exam.questions {
            let stream = slot.stream(&q.question_id)?.lock().await;
            questions.insert(q.question_id.clone(), stream.validator.progress());
        }
        Ok(SessionView {
            session_id: slot.session.session_id.clone(),
            exam_id: slot.session.exam_id.clone(),
            student_id: slot.session.student_id.clone(),
            questions,
        })
    }

    pub async fn progress(
        &self,
        session: &SessionId,
        question: &QuestionId,
    ) -> Result<QuestionProgress, SessionError> {
        let slot = self.slot(session)?;
        let stream = slot.stream(question)?.lock().await;
        Ok(stream.validator.progress())
    }

    /// Appends one event to a locked stream, retrying on seq races with
    /// writers outside this engine.
    fn append(
        &self,
        slot: &SessionSlot,
        stream: &mut Stream,
        question: Option<&QuestionId>,
        now: Timestamp,
        payload: EventPayload,
    ) -> Result<TraceEvent, SessionError> {
        let mut attempts = 0;
        loop {
            let ts = match stream.validator.last_ts() {
                Some(last) if last > now => last,
                _ => truncate_ms(now),
            };
            let event = TraceEvent {
                seq: stream.validator.next_seq(),
                ts,
                question_id: question.cloned(),
                payload: payload.clone(),
            };
            stream
                .validator
                .check(&event)
                .map_err(|v| SessionError::OrderViolation(v.to_string()))?;
            let record = StoredEventRecord {
                session_id: slot.session.session_id.clone(),
                event: event.clone(),
            };
            match self.store.append_event(&record) {
                Ok(()) => {
                    stream.validator.push(&event).expect("event was checked");
                    stream.events.push(event.clone());
                    return Ok(event);
                }
                Err(StoreError::SequenceConflict { .. }) if attempts < APPEND_RETRIES => {
                    attempts += 1;
                    self.resync(slot, stream, question)?;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn resync(
        &self,
        slot: &SessionSlot,
        stream: &mut Stream,
        question: Option<&QuestionId>,
    ) -> Result<(), SessionError> {
        let records = match question {
            Some(q) => self.store.load_trace(&slot.session.session_id, Some(q))?,
            None => self
                .store
                .load_trace(&slot.session.session_id, None)?
                .into_iter()
                .filter(|r| r.event.question_id.is_none())
                .collect(),
        };
        let mut fresh = Stream::new(Stream::scope_for(&question.cloned()));
        for r in records {
            fresh
                .validator
                .push(&r.event)
                .map_err(|v| SessionError::CorruptTrace(v.to_string()))?;
            fresh.events.push(r.event);
        }
        *stream = fresh;
        Ok(())
    }

    fn order(msg: impl Into<String>) -> SessionError {
        SessionError::OrderViolation(msg.into())
    }

    /// Logs the initial answer, or an edit of it while no tool has been used.
    /// Any text is accepted verbatim, including "I don't know".
    pub async fn submit_initial_answer(
        &self,
        session: &SessionId,
        question: &QuestionId,
        text: &str,
        now: Timestamp,
    ) -> Result<TraceEvent, SessionError> {
        let slot = self.slot(session)?;
        let mut stream = slot.stream(question)?.lock().await;
        Self::check_window(&slot.exam, now)?;
        let payload = AnswerPayload {
            text: text.to_owned(),
        };
        let payload = match stream.validator.progress().state {
            QuestionState::AwaitingInitial => EventPayload::InitialAnswer(payload),
            QuestionState::Exploring if !stream.validator.tool_used() => {
                EventPayload::InitialAnswerEdit(payload)
            }
            QuestionState::Exploring => {
                return Err(Self::order(
                    "the initial answer cannot change after a tool has been consulted",
                ))
            }
            QuestionState::Finalized => {
                return Err(Self::order("the question already has a final answer"))
            }
        };
        self.append(&slot, &mut stream, Some(question), now, payload)
    }

    fn tool_for<'a>(
        exam: &'a Exam,
        question: &QuestionId,
        tool: &ToolId,
        kind: ToolKind,
    ) -> Result<&'a crate::domain::ToolDescriptor, SessionError> {
        let q = exam
            .question(question)
            .ok_or_else(|| SessionError::UnknownQuestion(question.clone()))?;
        let descriptor = exam
            .tool(tool)
            .ok_or_else(|| SessionError::UnknownTool(tool.clone()))?;
        Gateway::check_policy(descriptor, q.policy(tool), kind)?;
        Ok(descriptor)
    }

    /// Reopens a finalized question before further exploration.
    fn reopen_if_final(
        &self,
        slot: &SessionSlot,
        stream: &mut Stream,
        question: &QuestionId,
        now: Timestamp,
    ) -> Result<Option<TraceEvent>, SessionError> {
        if stream.validator.progress().state != QuestionState::Finalized {
            return Ok(None);
        }
        let reopens_seq = stream
            .validator
            .last_final()
            .expect("finalized streams have a final answer");
        self.append(
            slot,
            stream,
            Some(question),
            now,
            EventPayload::Revision(RevisionPayload { reopens_seq }),
        )
        .map(Some)
    }

    fn history(stream: &Stream, tool: &ToolId) -> Vec<Turn> {
        let mut prompts: HashMap<u64, &str> = HashMap::new();
        let mut turns = Vec::new();
        for e in &stream.events {
            match &e.payload {
                EventPayload::AiPrompt(p) if &p.tool_id == tool => {
                    prompts.insert(e.seq, &p.text);
                }
                EventPayload::AiResponse(r) if &r.tool_id == tool => {
                    if let Some(prompt) = prompts.get(&r.linked_seq) {
                        turns.push(Turn::student(*prompt));
                        turns.push(Turn::assistant(r.text.clone()));
                    }
                }
                _ => {}
            }
        }
        turns
    }

    /// Sends a prompt to an enabled chat tool under the question's directive.
    ///
    /// Logs `ai_prompt` followed by `ai_response`, or by `tool_error` when the
    /// provider fails. Provider failures are not errors of this call.
    pub async fn ask_ai(
        &self,
        session: &SessionId,
        question: &QuestionId,
        tool: &ToolId,
        prompt: &str,
        now: Timestamp,
    ) -> Result<AskOutcome, SessionError> {
        let slot = self.slot(session)?;
        let mut stream = slot.stream(question)?.lock().await;
        Self::check_window(&slot.exam, now)?;
        if stream.validator.progress().state == QuestionState::AwaitingInitial {
            return Err(Self::order(
                "submit an initial answer before consulting tools",
            ));
        }
        let descriptor = Self::tool_for(&slot.exam, question, tool, ToolKind::ChatModel)?;
        let q = slot.exam.question(question).expect("checked by tool_for");
        let policy = q.policy(tool).expect("checked by tool_for");

        let history = Self::history(&stream, tool);
        let request = self
            .gateway
            .compose_request(descriptor, policy, q, &history, prompt)?;

        let revision = self.reopen_if_final(&slot, &mut stream, question, now)?;
        let prompt_event = self.append(
            &slot,
            &mut stream,
            Some(question),
            now,
            EventPayload::AiPrompt(PromptPayload {
                tool_id: tool.clone(),
                text: prompt.to_owned(),
            }),
        )?;

        let started = Instant::now();
        let result = match self.providers.chat(&descriptor.provider_ref) {
            Ok(provider) => {
                self.gateway
                    .dispatch_chat(&request, provider.as_ref())
                    .await
            }
            Err(e) => Err(GatewayError::Provider(e)),
        };
        let replied_at = now + ChronoDuration::from_std(started.elapsed()).unwrap_or_default();
        let reply = match result {
            Ok(resp) => EventPayload::AiResponse(ResponsePayload {
                tool_id: tool.clone(),
                linked_seq: prompt_event.seq,
                text: resp.text,
                latency_ms: u64::try_from(resp.latency.as_millis()).unwrap_or(u64::MAX),
                provider_meta: resp.provider_meta,
            }),
            Err(e) => EventPayload::ToolError(ToolErrorPayload {
                tool_id: tool.clone(),
                linked_seq: prompt_event.seq,
                code: e.code().to_owned(),
                message: e.to_string(),
            }),
        };
        let reply = self.append(&slot, &mut stream, Some(question), replied_at, reply)?;
        Ok(AskOutcome {
            revision,
            request: prompt_event,
            reply,
        })
    }

    /// Runs a query against an enabled search tool. `limit` is capped at
    /// [`MAX_SEARCH_LIMIT`].
    pub async fn search(
        &self,
        session: &SessionId,
        question: &QuestionId,
        tool: &ToolId,
        query: &str,
        limit: u32,
        now: Timestamp,
    ) -> Result<AskOutcome, SessionError> {
        let slot = self.slot(session)?;
        let mut stream = slot.stream(question)?.lock().await;
        Self::check_window(&slot.exam, now)?;
        if stream.validator.progress().state == QuestionState::AwaitingInitial {
            return Err(Self::order(
                "submit an initial answer before consulting tools",
            ));
        }
        let descriptor = Self::tool_for(&slot.exam, question, tool, ToolKind::SearchEngine)?;
        let limit = limit.min(MAX_SEARCH_LIMIT);

        let revision = self.reopen_if_final(&slot, &mut stream, question, now)?;
        let query_event = self.append(
            &slot,
            &mut stream,
            Some(question),
            now,
            EventPayload::SearchQuery(SearchQueryPayload {
                tool_id: tool.clone(),
                query: query.to_owned(),
                limit,
            }),
        )?;

        let started = Instant::now();
        let result = match self.providers.search(&descriptor.provider_ref) {
            Ok(provider) => {
                self.gateway
                    .dispatch_search(query, provider.as_ref(), limit as usize)
                    .await
            }
            Err(e) => Err(GatewayError::Provider(e)),
        };
        let replied_at = now + ChronoDuration::from_std(started.elapsed()).unwrap_or_default();
        let reply = match result {
            Ok(results) => EventPayload::SearchResults(SearchResultsPayload {
                tool_id: tool.clone(),
                linked_seq: query_event.seq,
                results,
            }),
            Err(e) => EventPayload::ToolError(ToolErrorPayload {
                tool_id: tool.clone(),
                linked_seq: query_event.seq,
                code: e.code().to_owned(),
                message: e.to_string(),
            }),
        };
        let reply = self.append(&slot, &mut stream, Some(question), replied_at, reply)?;
        Ok(AskOutcome {
            revision,
            request: query_event,
            reply,
        })
    }

    pub async fn comment_on_output(
        &self,
        session: &SessionId,
        question: &QuestionId,
        response_seq: u64,
        text: &str,
        now: Timestamp,
    ) -> Result<TraceEvent, SessionError> {
        let slot = self.slot(session)?;
        let mut stream = slot.stream(question)?.lock().await;
        Self::check_window(&slot.exam, now)?;
        match stream.validator.kind_of(response_seq) {
            None => return Err(SessionError::UnknownEvent(response_seq)),
            Some(EventKind::AiResponse) => {}
            Some(actual) => {
                return Err(SessionError::WrongKind {
                    seq: response_seq,
                    actual,
                    expected: EventKind::AiResponse,
                })
            }
        }
        self.append(
            &slot,
            &mut stream,
            Some(question),
            now,
            EventPayload::AiComment(CommentPayload {
                linked_seq: response_seq,
                text: text.to_owned(),
            }),
        )
    }

    /// Logs window focus telemetry in the session-scope stream. Unpaired
    /// events are accepted.
    pub async fn record_focus_event(
        &self,
        session: &SessionId,
        kind: FocusKind,
        active_question: Option<&QuestionId>,
        client_ts: Option<String>,
        now: Timestamp,
    ) -> Result<TraceEvent, SessionError> {
        let slot = self.slot(session)?;
        if let Some(q) = active_question {
            slot.stream(q)?;
        }
        let mut stream = slot
            .streams
            .get(&None)
            .expect("focus stream always exists")
            .lock()
            .await;
        Self::check_window(&slot.exam, now)?;
        let payload = FocusPayload {
            active_question: active_question.cloned(),
            client_ts,
        };
        let payload = match kind {
            FocusKind::FocusLost => EventPayload::FocusLost(payload),
            FocusKind::FocusRegained => EventPayload::FocusRegained(payload),
        };
        self.append(&slot, &mut stream, None, now, payload)
    }

    /// Logs a final answer. Resubmitting reopens the question first, so the
    /// trace reads `final_answer, revision, final_answer`.
    pub async fn submit_final_answer(
        &self,
        session: &SessionId,
        question: &QuestionId,
        text: &str,
        now: Timestamp,
    ) -> Result<Vec<TraceEvent>, SessionError> {
        let slot = self.slot(session)?;
        let mut stream = slot.stream(question)?.lock().await;
        Self::check_window(&slot.exam, now)?;
        if stream.validator.progress().state == QuestionState::AwaitingInitial {
            return Err(Self::order(
                "submit an initial answer before the final answer",
            ));
        }
        let mut out = Vec::with_capacity(2);
        if let Some(rev) = self.reopen_if_final(&slot, &mut stream, question, now)? {
            out.push(rev);
        }
        out.push(self.append(
            &slot,
            &mut stream,
            Some(question),
            now,
            EventPayload::FinalAnswer(AnswerPayload {
                text: text.to_owned(),
            }),
        )?);
        Ok(out)
    }

    pub fn load_trace(
        &self,
        session: &SessionId,
        question: Option<&QuestionId>,
    ) -> Result<Vec<TraceEvent>, SessionError> {
        self.slot(session)?;
        Ok(self
            .store
            .load_trace(session, question)?
            .into_iter()
            .map(|r| r.event)
            .collect())
    }

    pub fn export_trace(&self, session: &SessionId) -> Result<String, SessionError> {
        self.slot(session)?;
        Ok(self.store.export_trace(session)?)
    }

    /// Imports a trace document as a read-only session of a known exam.
    pub async fn import_trace(&self, text: &str) -> Result<SessionId, SessionError> {
        let doc = document::parse(text).map_err(SessionError::Document)?;
        let exam = self
            .exam(&doc.header.exam_id)
            .ok_or_else(|| SessionError::UnknownExam(doc.header.exam_id.clone()))?;
        for (i, e) in doc.events.iter().enumerate() {
            if let Some(q) = &e.question_id {
                if exam.question(q).is_none() {
                    return Err(SessionError::Document(DocumentError::InvariantViolation {
                        line: i + 2,
                        invariant: Invariant::StreamScope,
                        detail: format!("question {q} is not part of exam {}", exam.exam_id),
                    }));
                }
            }
        }
        let _guard = self.open_lock.lock().await;
        if let Some(existing) = self.session_of(&doc.header.exam_id, &doc.header.student_id) {
            return Err(SessionError::SessionExists(existing));
        }
        let id = self.store.import_document(&doc)?;
        let session = self.store.session(&id)?;
        self.restore_session(session)?;
        Ok(id)
    }

    #[allow(clippy::too_many_arguments)]
    pub async fn score_rubric(
        &self,
        session: &SessionId,
        question: &QuestionId,
        levels: [u8; 5],
        assessor: &InstructorId,
        notes: &str,
        now: Timestamp,
    ) -> Result<RubricScore, SessionError> {
        let slot = self.slot(session)?;
        slot.stream(question)?;
        let score = analytics::score_rubric(
            session.clone(),
            question.clone(),
            levels,
            &slot.exam.rubric,
            assessor.clone(),
            notes.to_owned(),
            truncate_ms(now),
        )?;
        self.store.append_score(&score)?;
        Ok(score)
    }

    pub fn analytics_summary(&self, exam_id: &ExamId) -> Result<ExamAnalytics, SessionError> {
        let exam = self
            .exam(exam_id)
            .ok_or_else(|| SessionError::UnknownExam(exam_id.clone()))?;
        let slots: Vec<Arc<SessionSlot>> = self
            .registry()
            .sessions
            .values()
            .filter(|s| &s.session.exam_id == exam_id)
            .cloned()
            .collect();
        let mut data = Vec::with_capacity(slots.len());
        for slot in slots {
            let id = &slot.session.session_id;
            data.push(SessionData {
                session_id: id.clone(),
                student_id: slot.session.student_id.clone(),
                events: self
                    .store
                    .load_trace(id, None)?
                    .into_iter()
                    .map(|r| r.event)
                    .collect(),
                scores: self.store.scores(id)?,
            });
        }
        Ok(analytics::summarize(&exam, &data)?)
    }
}
