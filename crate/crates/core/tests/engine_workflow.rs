mod common;

use std::sync::Arc;

use common::{at, exam};
use mindexam_core::analytics::{compute_indicators, ConfidenceBand, ExamAnalytics, StudentRow};
use mindexam_core::domain::{
    validate_exam_config, InstructorId, QuestionId, SessionId, StudentId, ToolId,
};
use mindexam_core::gateway::{
    FailingProvider, Gateway, GatewayConfig, ProviderRegistry, ScriptedChatProvider,
};
use mindexam_core::session::{
    EventKind, EventPayload, FocusKind, QuestionState, SessionEngine, SessionError,
};
use mindexam_core::store::{FileStore, MemoryStore, TraceStore};

fn engine_with(store: Arc<dyn TraceStore>, providers: ProviderRegistry) -> SessionEngine {
    SessionEngine::new(store, Gateway::new(GatewayConfig::default()), providers).unwrap()
}

fn engine() -> SessionEngine {
    engine_with(Arc::new(MemoryStore::new()), ProviderRegistry::with_mocks())
}

async fn open(engine: &SessionEngine, exam_name: &str, student: &str) -> SessionId {
    let exam = exam(exam_name);
    let id = exam.exam_id.clone();
    if engine.exam(&id).is_none() {
        engine.register_exam(exam).unwrap();
    }
    engine
        .open_session(&StudentId::from(student), &id, at("18:05:00"))
        .await
        .unwrap()
        .0
        .session_id
}

fn row_of<'a>(summary: &'a ExamAnalytics, student: &str) -> &'a StudentRow {
    summary
        .rows
        .iter()
        .find(|r| r.student_id.as_str() == student)
        .unwrap()
}

fn q(s: &str) -> QuestionId {
    s.into()
}

fn t(s: &str) -> ToolId {
    s.into()
}

#[tokio::test]
async fn tools_are_locked_until_the_initial_answer() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    let err = e
        .ask_ai(&s, &q("q1"), &t("gpt5"), "which one?", at("18:06:00"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "order_violation");
    let err = e
        .search(&s, &q("q1"), &t("web"), "cia", 5, at("18:06:00"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "order_violation");
    let err = e
        .submit_final_answer(&s, &q("q1"), "availability", at("18:06:00"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "order_violation");
    assert!(e.load_trace(&s, None).unwrap().is_empty());

    e.submit_initial_answer(&s, &q("q1"), "I don't know", at("18:07:00"))
        .await
        .unwrap();
    let out = e
        .ask_ai(&s, &q("q1"), &t("gpt5"), "which one?", at("18:08:00"))
        .await
        .unwrap();
    assert_eq!(out.request.kind(), EventKind::AiPrompt);
    assert_eq!(out.reply.kind(), EventKind::AiResponse);
    assert!(out.revision.is_none());
}

#[tokio::test]
async fn directive_reaches_the_provider_and_not_the_prompt_event() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "confidentiality", at("18:07:00"))
        .await
        .unwrap();
    let out = e
        .ask_ai(
            &s,
            &q("q1"),
            &t("gpt5"),
            "is it encryption?",
            at("18:08:00"),
        )
        .await
        .unwrap();
    let EventPayload::AiResponse(resp) = &out.reply.payload else {
        panic!()
    };
    let instruction = mindexam_core::domain::default_instruction(
        mindexam_core::domain::DirectiveKind::NoFinalAnswer,
    )
    .unwrap();
    assert_eq!(
        resp.text,
        format!("DIRECTIVES[{instruction}]PROMPT[is it encryption?]")
    );
    let EventPayload::AiPrompt(prompt) = &out.request.payload else {
        panic!()
    };
    assert_eq!(prompt.text, "is it encryption?");

    let out = e
        .ask_ai(&s, &q("q1"), &t("llama"), "and now?", at("18:09:00"))
        .await
        .unwrap();
    let EventPayload::AiResponse(resp) = &out.reply.payload else {
        panic!()
    };
    assert_eq!(resp.text, "DIRECTIVES[]PROMPT[and now?]");
}

#[tokio::test]
async fn initial_answer_can_be_edited_only_before_tool_use() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "a", at("18:07:00"))
        .await
        .unwrap();
    let edit = e
        .submit_initial_answer(&s, &q("q1"), "b", at("18:07:30"))
        .await
        .unwrap();
    assert_eq!(edit.kind(), EventKind::InitialAnswerEdit);
    e.search(&s, &q("q1"), &t("gpt5"), "x", 3, at("18:08:00"))
        .await
        .unwrap_err();
    e.ask_ai(&s, &q("q1"), &t("gpt5"), "x", at("18:08:00"))
        .await
        .unwrap();
    let err = e
        .submit_initial_answer(&s, &q("q1"), "c", at("18:09:00"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "order_violation");
}

#[tokio::test]
async fn tool_checks() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "a", at("18:07:00"))
        .await
        .unwrap();
    let codes = [
        e.search(&s, &q("q1"), &t("web"), "x", 3, at("18:08:00"))
            .await
            .unwrap_err()
            .code(),
        e.search(&s, &q("q1"), &t("gpt5"), "x", 3, at("18:08:00"))
            .await
            .unwrap_err()
            .code(),
        e.ask_ai(&s, &q("q1"), &t("claude"), "x", at("18:08:00"))
            .await
            .unwrap_err()
            .code(),
        e.ask_ai(&s, &q("q9"), &t("gpt5"), "x", at("18:08:00"))
            .await
            .unwrap_err()
            .code(),
    ];
    assert_eq!(
        codes,
        [
            "tool_disabled",
            "wrong_tool_kind",
            "unknown_tool",
            "unknown_question"
        ]
    );
    assert_eq!(e.load_trace(&s, None).unwrap().len(), 1);
}

#[tokio::test]
async fn search_results_are_ranked_and_capped() {
    let e = engine();
    let s = open(&e, "caesar", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "key 3", at("18:07:00"))
        .await
        .unwrap();
    let out = e
        .search(&s, &q("q1"), &t("web"), "caesar shift", 3, at("18:08:00"))
        .await
        .unwrap();
    let EventPayload::SearchResults(r) = &out.reply.payload else {
        panic!("{:?}", out.reply)
    };
    assert_eq!(
        r.results.iter().map(|x| x.rank).collect::<Vec<_>>(),
        [1, 2, 3]
    );
    assert_eq!(r.linked_seq, out.request.seq);
    let out = e
        .search(&s, &q("q1"), &t("web"), "x", 1000, at("18:09:00"))
        .await
        .unwrap();
    let EventPayload::SearchQuery(sq) = &out.request.payload else {
        panic!()
    };
    assert_eq!(sq.limit, mindexam_core::session::MAX_SEARCH_LIMIT);
}

#[tokio::test]
async fn comments_must_target_a_response() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "a", at("18:07:00"))
        .await
        .unwrap();
    let out = e
        .ask_ai(&s, &q("q1"), &t("gpt5"), "x", at("18:08:00"))
        .await
        .unwrap();
    assert_eq!(
        e.comment_on_output(&s, &q("q1"), out.request.seq, "hm", at("18:09:00"))
            .await
            .unwrap_err()
            .code(),
        "wrong_event_kind"
    );
    assert_eq!(
        e.comment_on_output(&s, &q("q1"), 99, "hm", at("18:09:00"))
            .await
            .unwrap_err()
            .code(),
        "unknown_event"
    );
    let c = e
        .comment_on_output(&s, &q("q1"), out.reply.seq, "this is wrong", at("18:09:00"))
        .await
        .unwrap();
    assert_eq!(c.kind(), EventKind::AiComment);
}

#[tokio::test]
async fn resubmitting_a_final_answer_logs_a_revision() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "a", at("18:07:00"))
        .await
        .unwrap();
    let first = e
        .submit_final_answer(&s, &q("q1"), "availability", at("18:20:00"))
        .await
        .unwrap();
    assert_eq!(first.len(), 1);
    assert_eq!(
        e.progress(&s, &q("q1")).await.unwrap().state,
        QuestionState::Finalized
    );

    let out = e
        .ask_ai(&s, &q("q1"), &t("llama"), "sure?", at("18:21:00"))
        .await
        .unwrap();
    let rev = out.revision.expect("reopened");
    assert_eq!(
        rev.payload,
        EventPayload::Revision(mindexam_core::session::RevisionPayload {
            reopens_seq: first[0].seq
        })
    );
    assert_eq!(
        e.progress(&s, &q("q1")).await.unwrap().state,
        QuestionState::Exploring
    );

    let second = e
        .submit_final_answer(&s, &q("q1"), "availability, still", at("18:30:00"))
        .await
        .unwrap();
    assert_eq!(second.len(), 1);
    let third = e
        .submit_final_answer(&s, &q("q1"), "availability!", at("18:31:00"))
        .await
        .unwrap();
    assert_eq!(
        third.iter().map(|e| e.kind()).collect::<Vec<_>>(),
        [EventKind::Revision, EventKind::FinalAnswer]
    );

    let trace = e.load_trace(&s, Some(&q("q1"))).unwrap();
    let ind = compute_indicators(&trace).unwrap();
    assert_eq!(ind.revision_count, 2);
    assert_eq!(ind.explore_duration, Some(24.0 * 60.0));
}

#[tokio::test]
async fn time_window_is_enforced() {
    let e = engine();
    let ex = exam("cia-triad");
    e.register_exam(ex.clone()).unwrap();
    let early = e
        .open_session(&"student-1".into(), &ex.exam_id, at("17:59:59"))
        .await
        .unwrap_err();
    assert_eq!(early, SessionError::ExamNotOpen);
    let (sess, _) = e
        .open_session(&"student-1".into(), &ex.exam_id, at("18:00:00"))
        .await
        .unwrap();
    let s = sess.session_id;
    e.submit_initial_answer(&s, &q("q1"), "a", at("20:59:59"))
        .await
        .unwrap();
    let late = e
        .ask_ai(&s, &q("q1"), &t("gpt5"), "x", at("21:00:00"))
        .await
        .unwrap_err();
    assert_eq!(late.code(), "exam_closed");
    // the window is checked before workflow order
    let late = e
        .submit_initial_answer(&s, &q("q1"), "b", at("21:00:00"))
        .await
        .unwrap_err();
    assert_eq!(late, SessionError::ExamClosed);
}

#[tokio::test]
async fn one_session_per_enrolled_student() {
    let e = engine();
    let s = open(&e, "cia-triad", "student-1").await;
    let again = e
        .open_session(&"student-1".into(), &"sec-cia".into(), at("18:06:00"))
        .await
        .unwrap_err();
    assert_eq!(again, SessionError::SessionExists(s));
    let stranger = e
        .open_session(&"mallory".into(), &"sec-cia".into(), at("18:06:00"))
        .await
        .unwrap_err();
    assert_eq!(stranger.code(), "not_enrolled");
    let unknown = e
        .open_session(&"student-1".into(), &"nope".into(), at("18:06:00"))
        .await
        .unwrap_err();
    assert_eq!(unknown.code(), "unknown_exam");
}

#[tokio::test]
async fn tokens_resolve_to_their_session_only() {
    let e = engine();
    let ex = exam("cia-triad");
    e.register_exam(ex.clone()).unwrap();
    let (s1, tok1) = e
        .open_session(&"student-1".into(), &ex.exam_id, at("18:01:00"))
        .await
        .unwrap();
    let (s2, tok2) = e
        .open_session(&"student-2".into(), &ex.exam_id, at("18:01:00"))
        .await
        .unwrap();
    assert_ne!(tok1.as_str(), tok2.as_str());
    assert_eq!(tok1.as_str().len(), 64);
    assert_eq!(e.session_for_token(tok1.as_str()).unwrap(), s1);
    assert_eq!(e.session_for_token(tok2.as_str()).unwrap(), s2);
    assert!(e.session_for_token("0".repeat(64).as_str()).is_none());
    assert!(!s1.token_hash.contains(tok1.as_str()));
}

#[tokio::test]
async fn provider_failure_becomes_a_tool_error_event() {
    let mut providers = ProviderRegistry::with_mocks();
    providers.register_chat("broken", Arc::new(FailingProvider::status(503)));
    let e = engine_with(Arc::new(MemoryStore::new()), providers);
    let mut doc = common::config_json("cia-triad");
    doc["tool_registry"][0]["provider_ref"] = "broken".into();
    e.register_exam(validate_exam_config(&doc).unwrap())
        .unwrap();
    let (sess, _) = e
        .open_session(&"student-1".into(), &"sec-cia".into(), at("18:01:00"))
        .await
        .unwrap();
    let s = sess.session_id;
    e.submit_initial_answer(&s, &q("q1"), "a", at("18:02:00"))
        .await
        .unwrap();
    let out = e
        .ask_ai(&s, &q("q1"), &t("gpt5"), "x", at("18:03:00"))
        .await
        .unwrap();
    assert!(out.failed());
    let EventPayload::ToolError(err) = &out.reply.payload else {
        panic!()
    };
    assert_eq!(err.code, "provider_status");
    assert!(err.message.contains("503"));
    assert_eq!(err.linked_seq, out.request.seq);
    // the session keeps working
    let out = e
        .ask_ai(&s, &q("q1"), &t("llama"), "y", at("18:04:00"))
        .await
        .unwrap();
    assert!(!out.failed());
}

#[tokio::test]
async fn focus_events_form_their_own_stream() {
    let e = engine();
    let s = open(&e, "https-no-ca", "student-1").await;
    e.submit_initial_answer(&s, &q("q1"), "a", at("18:07:00"))
        .await
        .unwrap();
    let lost = e
        .record_focus_event(
            &s,
            FocusKind::FocusLost,
            Some(&q("q1")),
            Some("client-1".into()),
            at("18:08:00"),
        )
        .await
        .unwrap();
    assert_eq!((lost.seq, lost.question_id.clone()), (1, None));
    // a regain without a loss is accepted
    e.record_focus_event(&s, FocusKind::FocusRegained, None, None, at("18:08:30"))
        .await
        .unwrap();
    e.record_focus_event(&s, FocusKind::FocusRegained, None, None, at("18:08:40"))
        .await
        .unwrap();
    let err = e
        .record_focus_event(
            &s,
            FocusKind::FocusLost,
            Some(&q("q7")),
            None,
            at("18:09:00"),
        )
        .await
        .unwrap_err();
    assert_eq!(err.code(), "unknown_question");
    let summary = e.analytics_summary(&"sec-https-no-ca".into()).unwrap();
    let row = &row_of(&summary, "student-1").questions[0];
    assert_eq!(row.indicators.off_task_count, 1);
    assert_eq!(row.indicators.off_task_total, 30.0);
}

#[tokio::test]
async fn rubric_scores_are_stored_and_summarized() {
    let e = engine();
    let s = open(&e, "zero-trust", "student-zt").await;
    let assessor = InstructorId::from("prof-w");
    let score = e
        .score_rubric(
            &s,
            &q("q1"),
            [4, 4, 3, 4, 4],
            &assessor,
            "critical of the tool",
            at("22:00:00"),
        )
        .await
        .unwrap();
    // weights 0.25 0.25 0.2 0.15 0.15
    assert!((score.overall - 3.8).abs() < 1e-9);
    assert_eq!(score.band, ConfidenceBand::High);
    let err = e
        .score_rubric(&s, &q("q1"), [5, 0, 0, 0, 0], &assessor, "", at("22:00:00"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "level_out_of_range");
    let summary = e.analytics_summary(&"sec-zero-trust".into()).unwrap();
    assert_eq!(
        row_of(&summary, "student-zt").questions[0].rubric_scores,
        vec![score]
    );
}

/// Drives the engine through the zero-trust log and checks the indicators.
#[tokio::test]
async fn engine_reproduces_the_zero_trust_log() {
    let doc = mindexam_core::store::document::parse(&common::trace("zero-trust")).unwrap();
    let mut replies = Vec::new();
    for ev in &doc.events {
        if let EventPayload::AiResponse(r) = &ev.payload {
            replies.push(r.text.clone());
        }
    }
    let mut providers = ProviderRegistry::with_mocks();
    providers.register_chat("mock", Arc::new(ScriptedChatProvider::new(replies)));
    let e = engine_with(Arc::new(MemoryStore::new()), providers);
    let s = open(&e, "zero-trust", "student-zt").await;

    let mut last_response = 0;
    for ev in &doc.events {
        match &ev.payload {
            EventPayload::InitialAnswer(a) => {
                e.submit_initial_answer(&s, &q("q1"), &a.text, ev.ts)
                    .await
                    .unwrap();
            }
            EventPayload::AiPrompt(p) => {
                last_response = e
                    .ask_ai(&s, &q("q1"), &p.tool_id, &p.text, ev.ts)
                    .await
                    .unwrap()
                    .reply
                    .seq;
            }
            EventPayload::AiComment(c) => {
                e.comment_on_output(&s, &q("q1"), last_response, &c.text, ev.ts)
                    .await
                    .unwrap();
            }
            EventPayload::FinalAnswer(a) => {
                e.submit_final_answer(&s, &q("q1"), &a.text, ev.ts)
                    .await
                    .unwrap();
            }
            _ => {}
        }
    }
    let trace = e.load_trace(&s, Some(&q("q1"))).unwrap();
    let ind = compute_indicators(&trace).unwrap();
    assert_eq!(ind.prompt_count, 2);
    assert_eq!(ind.time_to_first_prompt, Some(2.0));
    assert_eq!(ind.explore_duration, Some(1543.0));
    assert_eq!(ind.comment_coverage, 1.0);
    let texts: Vec<_> = trace
        .iter()
        .map(|e| {
            (
                e.kind(),
                serde_json::to_value(e).unwrap()["payload"]["text"].clone(),
            )
        })
        .collect();
    let want: Vec<_> = doc
        .events
        .iter()
        .map(|e| {
            (
                e.kind(),
                serde_json::to_value(e).unwrap()["payload"]["text"].clone(),
            )
        })
        .collect();
    assert_eq!(texts, want);
}

#[tokio::test]
async fn import_and_export_through_the_engine() {
    let e = engine();
    e.register_exam(exam("forward-secrecy")).unwrap();
    for n in [1, 2] {
        let text = common::trace(&format!("forward-secrecy-student{n}"));
        let id = e.import_trace(&text).await.unwrap();
        assert_eq!(e.export_trace(&id).unwrap(), text);
        assert_eq!(
            e.import_trace(&text).await.unwrap_err().code(),
            "session_exists"
        );
    }
    let summary = e.analytics_summary(&"sec-forward-secrecy".into()).unwrap();
    assert!(row_of(&summary, "student-1").session_id.is_some());
    assert!(row_of(&summary, "student-2").session_id.is_some());
    assert!(row_of(&summary, "student-zt").session_id.is_none());

    // traces for exams the engine does not know are refused
    let err = e
        .import_trace(&common::trace("zero-trust"))
        .await
        .unwrap_err();
    assert_eq!(err.code(), "unknown_exam");
}

#[tokio::test]
async fn file_backed_engine_restores_state_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let s;
    {
        let e = engine_with(
            Arc::new(FileStore::open(dir.path()).unwrap()),
            ProviderRegistry::with_mocks(),
        );
        s = open(&e, "cia-triad", "student-1").await;
        e.submit_initial_answer(&s, &q("q1"), "a", at("18:07:00"))
            .await
            .unwrap();
        e.ask_ai(&s, &q("q1"), &t("gpt5"), "x", at("18:08:00"))
            .await
            .unwrap();
    }
    let e = engine_with(
        Arc::new(FileStore::open(dir.path()).unwrap()),
        ProviderRegistry::with_mocks(),
    );
    assert_eq!(
        e.progress(&s, &q("q1")).await.unwrap().state,
        QuestionState::Exploring
    );
    assert_eq!(
        e.submit_initial_answer(&s, &q("q1"), "b", at("18:09:00"))
            .await
            .unwrap_err()
            .code(),
        "order_violation"
    );
    let fin = e
        .submit_final_answer(&s, &q("q1"), "done", at("18:10:00"))
        .await
        .unwrap();
    assert_eq!(fin[0].seq, 4);
    let again = e
        .open_session(&"student-1".into(), &"sec-cia".into(), at("18:11:00"))
        .await
        .unwrap_err();
    assert_eq!(again.code(), "session_exists");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_keep_gapless_streams() {
    let e = Arc::new(engine());
    let ex = exam("https-no-ca");
    e.register_exam(ex.clone()).unwrap();
    let mut tasks = Vec::new();
    for student in ["student-1", "student-2", "student-zt"] {
        let e = e.clone();
        let exam_id = ex.exam_id.clone();
        tasks.push(tokio::spawn(async move {
            let (sess, _) = e
                .open_session(&student.into(), &exam_id, at("18:01:00"))
                .await
                .unwrap();
            let s = sess.session_id;
            let mut inner = Vec::new();
            for question in ["q1", "q2"] {
                let e = e.clone();
                let s = s.clone();
                inner.push(tokio::spawn(async move {
                    e.submit_initial_answer(&s, &q(question), "a", at("18:02:00"))
                        .await
                        .unwrap();
                    for i in 0..20 {
                        let _ = e
                            .ask_ai(
                                &s,
                                &q(question),
                                &t("gpt5"),
                                &format!("p{i}"),
                                at("18:03:00"),
                            )
                            .await;
                        let _ = e
                            .record_focus_event(
                                &s,
                                FocusKind::FocusLost,
                                Some(&q(question)),
                                None,
                                at("18:03:00"),
                            )
                            .await;
                    }
                }));
            }
            for t in inner {
                t.await.unwrap();
            }
            s
        }));
    }
    for task in tasks {
        let s = task.await.unwrap();
        let all = e.load_trace(&s, None).unwrap();
        for key in [Some(q("q1")), Some(q("q2")), None] {
            let seqs: Vec<u64> = all
                .iter()
                .filter(|ev| ev.question_id == key)
                .map(|ev| ev.seq)
                .collect();
            assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
        }
        let q1 = e.load_trace(&s, Some(&q("q1"))).unwrap();
        assert_eq!(q1.len(), 41);
    }
}
