mod common;

use mindexam_core::analytics::compute_indicators;
use mindexam_core::session::{EventKind, Invariant};
use mindexam_core::store::document::{parse, render};
use mindexam_core::store::{DocumentError, MemoryStore, TraceStore};

const TRACES: [&str; 4] = [
    "zero-trust",
    "zero-trust-eight-prompts",
    "forward-secrecy-student1",
    "forward-secrecy-student2",
];

#[test]
fn zero_trust_log_indicators() {
    let doc = parse(&common::trace("zero-trust")).unwrap();
    let ind = compute_indicators(&doc.events).unwrap();
    assert_eq!(ind.prompt_count, 2);
    // 18:32:24 - 18:32:22
    assert_eq!(ind.time_to_first_prompt, Some(2.0));
    // 18:58:05 - 18:32:22 = 25 min 43 s
    assert_eq!(ind.explore_duration, Some(25.0 * 60.0 + 43.0));
    assert_eq!(ind.comment_coverage, 1.0);
    assert_eq!(ind.revision_count, 0);
}

#[test]
fn eight_prompt_extension() {
    let doc = parse(&common::trace("zero-trust-eight-prompts")).unwrap();
    let ind = compute_indicators(&doc.events).unwrap();
    assert_eq!(ind.prompt_count, 8);
    assert_eq!(ind.time_to_first_prompt, Some(2.0));
    assert_eq!(ind.explore_duration, Some(1543.0));
    assert_eq!(ind.comment_coverage, 2.0 / 8.0);
}

#[test]
fn forward_secrecy_sessions_start_with_i_dont_know() {
    for name in ["forward-secrecy-student1", "forward-secrecy-student2"] {
        let doc = parse(&common::trace(name)).unwrap();
        let first = &doc.events[0];
        assert_eq!(first.kind(), EventKind::InitialAnswer);
        assert_eq!(
            serde_json::to_value(first).unwrap()["payload"]["text"],
            "I don't know"
        );
        let ind = compute_indicators(&doc.events).unwrap();
        assert_eq!(ind.prompt_count, 3, "{name}");
        assert_eq!(ind.comment_coverage, 0.0, "{name}");
    }
}

#[test]
fn fixtures_round_trip_byte_identically() {
    for name in TRACES {
        let text = common::trace(name);
        let doc = parse(&text).unwrap();
        assert_eq!(render(&doc), text, "{name} render");

        let store = MemoryStore::new();
        store
            .put_exam(&common::exam(if name.starts_with("zero") {
                "zero-trust"
            } else {
                "forward-secrecy"
            }))
            .unwrap();
        let id = store.import_trace(&text).unwrap();
        let exported = store.export_trace(&id).unwrap();
        assert_eq!(exported, text, "{name} export");
        let again = MemoryStore::new();
        let id = again.import_trace(&exported).unwrap();
        assert_eq!(
            again.export_trace(&id).unwrap(),
            text,
            "{name} second export"
        );
    }
}

fn lines(name: &str) -> Vec<String> {
    common::trace(name).lines().map(str::to_owned).collect()
}

fn join(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

fn invariant_of(text: &str) -> (usize, Invariant) {
    match parse(text) {
        Err(DocumentError::InvariantViolation {
            line, invariant, ..
        }) => (line, invariant),
        other => panic!("expected an invariant violation, got {other:?}"),
    }
}

#[test]
fn corrupted_documents_name_the_broken_invariant() {
    let base = lines("zero-trust");

    // prompt before the initial answer
    let mut l = base.clone();
    l.remove(1);
    let renumbered: Vec<String> = l
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i == 0 {
                s.clone()
            } else {
                s.replacen(&format!("\"seq\":{}", i + 1), &format!("\"seq\":{i}"), 1)
            }
        })
        .collect();
    assert_eq!(
        invariant_of(&join(&renumbered)).1,
        Invariant::InitialAnswerFirst
    );

    // gap in seq
    let mut l = base.clone();
    l.remove(3);
    assert_eq!(invariant_of(&join(&l)), (4, Invariant::GaplessSeq));

    // timestamps going backwards
    let mut l = base.clone();
    l[2] = l[2].replace("18:32:24.000Z", "18:30:00.000Z");
    assert_eq!(invariant_of(&join(&l)).1, Invariant::MonotonicTimestamps);

    // response pointing at a comment
    let mut l = base.clone();
    l[3] = l[3].replace("\"linked_seq\":2", "\"linked_seq\":1");
    assert_eq!(invariant_of(&join(&l)), (4, Invariant::ResponseLink));

    // comment pointing at a prompt
    let mut l = base.clone();
    l[4] = l[4].replace("\"linked_seq\":3", "\"linked_seq\":2");
    assert_eq!(invariant_of(&join(&l)), (5, Invariant::CommentLink));
}

#[test]
fn malformed_documents_are_schema_violations() {
    let text = common::trace("zero-trust");
    for bad in [
        String::new(),
        text.trim_end().to_owned(),
        text.replacen("mindexam-trace", "other-trace", 1),
        text.replacen("\"kind\":\"ai_comment\"", "\"kind\":\"ai_reaction\"", 1),
        text.replacen(".000Z", "Z", 1),
    ] {
        match parse(&bad) {
            Err(DocumentError::SchemaViolation { .. }) => {}
            other => panic!("expected a schema violation, got {other:?}"),
        }
    }
}
