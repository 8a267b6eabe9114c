#![allow(dead_code)]

use std::path::PathBuf;

use mindexam_core::domain::{validate_exam_config, Exam};
use mindexam_core::time::{parse_ts, Timestamp};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn read_fixture(rel: &str) -> String {
    let path = fixture_dir().join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn config_json(name: &str) -> serde_json::Value {
    serde_json::from_str(&read_fixture(&format!("configs/{name}.json"))).unwrap()
}

pub fn exam(name: &str) -> Exam {
    validate_exam_config(&config_json(name)).unwrap()
}

pub fn trace(name: &str) -> String {
    read_fixture(&format!("traces/{name}.ndjson"))
}

/// `HH:MM:SS` on the exam day, UTC.
pub fn at(hms: &str) -> Timestamp {
    parse_ts(&format!("2025-12-03T{hms}Z")).unwrap()
}
