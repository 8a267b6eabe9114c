//! Exam configuration intake.
//!
//! The configuration document is walked field by field so that every
//! violation is reported with its path, instead of stopping at the first
//! deserialization error.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    BehaviorDirective, DirectiveKind, Exam, ExamId, InstructorId, Question, QuestionId,
    RubricDefinition, RubricDimension, StudentId, ToolDescriptor, ToolId, ToolKind, ToolPolicy,
    DEFAULT_LEVELS_PER_DIMENSION, WEIGHT_SUM_TOLERANCE,
};
use crate::time::{parse_ts, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationErrorKind {
    MissingField,
    UnknownField,
    WrongType,
    InvalidValue,
    DuplicateId,
    UnknownToolReference,
    EmptyInstructionText,
    InvalidTimeWindow,
}

impl ValidationErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingField => "missing_field",
            Self::UnknownField => "unknown_field",
            Self::WrongType => "wrong_type",
            Self::InvalidValue => "invalid_value",
            Self::DuplicateId => "duplicate_id",
            Self::UnknownToolReference => "unknown_tool_reference",
            Self::EmptyInstructionText => "empty_instruction_text",
            Self::InvalidTimeWindow => "invalid_time_window",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub kind: ValidationErrorKind,
    /// Dotted path into the document, e.g. `questions[0].policies[1].tool_id`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at {}: {}",
            self.kind.as_str(),
            self.path,
            self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(transparent)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl ValidationErrors {
    pub fn iter(&self) -> impl Iterator<Item = &ValidationError> {
        self.0.iter()
    }

    pub fn has(&self, kind: ValidationErrorKind, path: &str) -> bool {
        self.0.iter().any(|e| e.kind == kind && e.path == path)
    }
}

/// Checks an exam configuration document and builds the [`Exam`] it describes.
///
/// Every violation found is returned, not just the first one. The function
/// never panics on malformed input.
pub fn validate_exam_config(doc: &Value) -> Result<Exam, ValidationErrors> {
    let mut w = Walker::default();
    let exam = w.exam(doc);
    match exam {
        Some(exam) if w.errors.is_empty() => Ok(exam),
        _ => {
            debug_assert!(!w.errors.is_empty());
            Err(ValidationErrors(w.errors))
        }
    }
}

fn join(parent: &str, field: &str) -> String {
    if parent.is_empty() {
        field.to_owned()
    } else {
        format!("{parent}.{field}")
    }
}

fn index(parent: &str, i: usize) -> String {
    format!("{parent}[{i}]")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Default)]
struct Walker {
    errors: Vec<ValidationError>,
}

impl Walker {
    fn push(
        &mut self,
        kind: ValidationErrorKind,
        path: impl Into<String>,
        message: impl Into<String>,
    ) {
        self.errors.push(ValidationError {
            kind,
            path: path.into(),
            message: message.into(),
        });
    }

    fn object<'a>(
        &mut self,
        v: &'a Value,
        path: &str,
        allowed: &[&str],
    ) -> Option<&'a Map<String, Value>> {
        let Some(obj) = v.as_object() else {
            let at = if path.is_empty() { "$" } else { path };
            self.push(
                ValidationErrorKind::WrongType,
                at,
                format!("expected object, found {}", type_name(v)),
            );
            return None;
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.push(
                    ValidationErrorKind::UnknownField,
                    join(path, key),
                    "unrecognized field",
                );
            }
        }
        Some(obj)
    }

    /// Present and non-null, or records `MissingField`.
    fn required<'a>(
        &mut self,
        obj: &'a Map<String, Value>,
        path: &str,
        field: &str,
    ) -> Option<&'a Value> {
        match obj.get(field) {
            None | Some(Value::Null) => {
                self.push(
                    ValidationErrorKind::MissingField,
                    join(path, field),
                    "required field is missing",
                );
                None
            }
            Some(v) => Some(v),
        }
    }

    fn optional<'a>(obj: &'a Map<String, Value>, field: &str) -> Option<&'a Value> {
        match obj.get(field) {
            None | Some(Value::Null) => None,
            Some(v) => Some(v),
        }
    }

    fn string(&mut self, v: &Value, path: &str) -> Option<String> {
        match v.as_str() {
            Some(s) => Some(s.to_owned()),
            None => {
                self.push(
                    ValidationErrorKind::WrongType,
                    path,
                    format!("expected string, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn non_empty_string(&mut self, v: &Value, path: &str) -> Option<String> {
        let s = self.string(v, path)?;
        if s.trim().is_empty() {
            self.push(ValidationErrorKind::InvalidValue, path, "must not be empty");
            return None;
        }
        Some(s)
    }

    fn required_id(&mut self, obj: &Map<String, Value>, path: &str, field: &str) -> Option<String> {
        let v = self.required(obj, path, field)?;
        self.non_empty_string(v, &join(path, field))
    }

    fn array<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Vec<Value>> {
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.push(
                    ValidationErrorKind::WrongType,
                    path,
                    format!("expected array, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(n) => Some(n),
            None => {
                self.push(
                    ValidationErrorKind::WrongType,
                    path,
                    format!("expected number, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn timestamp(&mut self, obj: &Map<String, Value>, field: &str) -> Option<Timestamp> {
        let v = self.required(obj, "", field)?;
        let s = self.string(v, field)?;
        match parse_ts(&s) {
            Ok(ts) => Some(ts),
            Err(msg) => {
                self.push(ValidationErrorKind::InvalidValue, field, msg);
                None
            }
        }
    }

    /// A list of ids forming a set; duplicates are reported.
    fn id_set<T: Ord + From<String>>(
        &mut self,
        obj: &Map<String, Value>,
        field: &str,
    ) -> Option<BTreeSet<T>> {
        let v = self.required(obj, "", field)?;
        let items = self.array(v, field)?;
        let mut seen = HashSet::new();
        let mut out = BTreeSet::new();
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let path = index(field, i);
            match self.non_empty_string(item, &path) {
                Some(s) => {
                    if !seen.insert(s.clone()) {
                        self.push(
                            ValidationErrorKind::DuplicateId,
                            path,
                            format!("duplicate id {s:?}"),
                        );
                    }
                    out.insert(T::from(s));
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn exam(&mut self, doc: &Value) -> Option<Exam> {
        let obj = self.object(
            doc,
            "",
            &[
                "exam_id",
                "title",
                "opens_at",
                "closes_at",
                "authors",
                "enrolled_students",
                "tool_registry",
                "questions",
                "rubric",
            ],
        )?;

        let exam_id = self.required_id(obj, "", "exam_id");
        let title = self.required_id(obj, "", "title");
        let opens_at = self.timestamp(obj, "opens_at");
        let closes_at = self.timestamp(obj, "closes_at");
        if let (Some(open), Some(close)) = (opens_at, closes_at) {
            if close <= open {
                self.push(
                    ValidationErrorKind::InvalidTimeWindow,
                    "closes_at",
                    "closes_at must be later than opens_at",
                );
            }
        }

        let authors = self.id_set::<InstructorId>(obj, "authors");
        if let Some(a) = &authors {
            if a.is_empty() {
                self.push(
                    ValidationErrorKind::InvalidValue,
                    "authors",
                    "an exam needs at least one author",
                );
            }
        }
        let enrolled = self.id_set::<StudentId>(obj, "enrolled_students");

        let tools = self.tool_registry(obj);
        let known_tools: Option<HashSet<ToolId>> = tools
            .as_ref()
            .map(|t| t.iter().map(|d| d.tool_id.clone()).collect());
        let questions = self.questions(obj, known_tools.as_ref());

        let rubric = match Self::optional(obj, "rubric") {
            None => Some(RubricDefinition::default()),
            Some(v) => self.rubric(v),
        };

        Some(Exam {
            exam_id: ExamId::new(exam_id?),
            title: title?,
            opens_at: opens_at?,
            closes_at: closes_at?,
            authors: authors?,
            enrolled_students: enrolled?,
            tool_registry: tools?,
            questions: questions?,
            rubric: rubric?,
        })
    }

    fn tool_registry(&mut self, obj: &Map<String, Value>) -> Option<Vec<ToolDescriptor>> {
        let v = self.required(obj, "", "tool_registry")?;
        let items = self.array(v, "tool_registry")?;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let path = index("tool_registry", i);
            match self.tool(item, &path) {
                Some(tool) => {
                    if !seen.insert(tool.tool_id.clone()) {
                        self.push(
                            ValidationErrorKind::DuplicateId,
                            join(&path, "tool_id"),
                            format!("duplicate tool id {:?}", tool.tool_id.as_str()),
                        );
                    }
                    out.push(tool);
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn tool(&mut self, v: &Value, path: &str) -> Option<ToolDescriptor> {
        let obj = self.object(
            v,
            path,
            &["tool_id", "kind", "provider_ref", "display_name"],
        )?;
        let tool_id = self.required_id(obj, path, "tool_id");
        let kind = self.required(obj, path, "kind").and_then(|k| {
            let kp = join(path, "kind");
            let s = self.string(k, &kp)?;
            match s.as_str() {
                "chat_model" => Some(ToolKind::ChatModel),
                "search_engine" => Some(ToolKind::SearchEngine),
                other => {
                    self.push(
                        ValidationErrorKind::InvalidValue,
                        kp,
                        format!(
                            "unknown tool kind {other:?}; expected chat_model or search_engine"
                        ),
                    );
                    None
                }
            }
        });
        let provider_ref = self.required_id(obj, path, "provider_ref");
        let display_name = self.required_id(obj, path, "display_name");
        Some(ToolDescriptor {
            tool_id: ToolId::new(tool_id?),
            kind: kind?,
            provider_ref: provider_ref?,
            display_name: display_name?,
        })
    }

    fn questions(
        &mut self,
        obj: &Map<String, Value>,
        tools: Option<&HashSet<ToolId>>,
    ) -> Option<Vec<Question>> {
        let v = self.required(obj, "", "questions")?;
        let items = self.array(v, "questions")?;
        if items.is_empty() {
            self.push(
                ValidationErrorKind::InvalidValue,
                "questions",
                "an exam needs at least one question",
            );
            return None;
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let path = index("questions", i);
            match self.question(item, &path, tools) {
                Some(q) => {
                    if !seen.insert(q.question_id.clone()) {
                        self.push(
                            ValidationErrorKind::DuplicateId,
                            join(&path, "question_id"),
                            format!("duplicate question id {:?}", q.question_id.as_str()),
                        );
                    }
                    out.push(q);
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn question(
        &mut self,
        v: &Value,
        path: &str,
        tools: Option<&HashSet<ToolId>>,
    ) -> Option<Question> {
        let obj = self.object(
            v,
            path,
            &[
                "question_id",
                "body",
                "attachments",
                "weight",
                "instructor_answer",
                "policies",
            ],
        )?;
        let question_id = self.required_id(obj, path, "question_id");
        let body = self.required_id(obj, path, "body");

        let weight = match Self::optional(obj, "weight") {
            None => Some(1.0),
            Some(w) => {
                let wp = join(path, "weight");
                self.number(w, &wp).and_then(|n| {
                    if n < 0.0 {
                        self.push(
                            ValidationErrorKind::InvalidValue,
                            wp,
                            "weight must be non-negative",
                        );
                        None
                    } else {
                        Some(n)
                    }
                })
            }
        };

        let instructor_answer = match Self::optional(obj, "instructor_answer") {
            None => Some(None),
            Some(a) => self.string(a, &join(path, "instructor_answer")).map(Some),
        };

        let attachments = match Self::optional(obj, "attachments") {
            None => Some(BTreeMap::new()),
            Some(a) => {
                let ap = join(path, "attachments");
                match a.as_object() {
                    None => {
                        self.push(
                            ValidationErrorKind::WrongType,
                            ap,
                            format!("expected object, found {}", type_name(a)),
                        );
                        None
                    }
                    Some(map) => {
                        let mut out = BTreeMap::new();
                        let mut ok = true;
                        for (name, blob) in map {
                            match self.string(blob, &join(&ap, name)) {
                                Some(s) => {
                                    out.insert(name.clone(), s);
                                }
                                None => ok = false,
                            }
                        }
                        ok.then_some(out)
                    }
                }
            }
        };

        let policies = match Self::optional(obj, "policies") {
            None => Some(Vec::new()),
            Some(p) => self.policies(p, &join(path, "policies"), tools),
        };

        Some(Question {
            question_id: QuestionId::new(question_id?),
            body: body?,
            attachments: attachments?,
            weight: weight?,
            instructor_answer: instructor_answer?,
            policies: policies?,
        })
    }

    fn policies(
        &mut self,
        v: &Value,
        path: &str,
        tools: Option<&HashSet<ToolId>>,
    ) -> Option<Vec<ToolPolicy>> {
        let items = self.array(v, path)?;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, item) in items.iter().enumerate() {
            let ppath = index(path, i);
            match self.policy(item, &ppath, tools) {
                Some(p) => {
                    if !seen.insert(p.tool_id.clone()) {
                        self.push(
                            ValidationErrorKind::DuplicateId,
                            join(&ppath, "tool_id"),
                            format!("second policy for tool {:?}", p.tool_id.as_str()),
                        );
                    }
                    out.push(p);
                }
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn policy(
        &mut self,
        v: &Value,
        path: &str,
        tools: Option<&HashSet<ToolId>>,
    ) -> Option<ToolPolicy> {
        let obj = self.object(v, path, &["tool_id", "enabled", "directive"])?;
        let tool_id = self.required_id(obj, path, "tool_id").map(ToolId::new);
        if let (Some(id), Some(known)) = (&tool_id, tools) {
            if !known.contains(id) {
                self.push(
                    ValidationErrorKind::UnknownToolReference,
                    join(path, "tool_id"),
                    format!("tool {:?} is not in tool_registry", id.as_str()),
                );
            }
        }
        let enabled = self.required(obj, path, "enabled").and_then(|e| {
            let b = e.as_bool();
            if b.is_none() {
                self.push(
                    ValidationErrorKind::WrongType,
                    join(path, "enabled"),
                    format!("expected boolean, found {}", type_name(e)),
                );
            }
            b
        });
        let directive = self
            .required(obj, path, "directive")
            .and_then(|d| self.directive(d, &join(path, "directive")));
        Some(ToolPolicy {
            tool_id: tool_id?,
            enabled: enabled?,
            directive: directive?,
        })
    }

    fn directive(&mut self, v: &Value, path: &str) -> Option<BehaviorDirective> {
        let obj = self.object(v, path, &["kind", "instruction_text"])?;
        let kind = self.required(obj, path, "kind").and_then(|k| {
            let kp = join(path, "kind");
            let s = self.string(k, &kp)?;
            let parsed = DirectiveKind::parse(&s);
            if parsed.is_none() {
                self.push(
                    ValidationErrorKind::InvalidValue,
                    kp,
                    format!(
                        "unknown directive kind {s:?}; expected one of unrestricted, no_final_answer, \
                         flawed_explanation, fake_theory, custom"
                    ),
                );
            }
            parsed
        });
        let tp = join(path, "instruction_text");
        let text = match Self::optional(obj, "instruction_text") {
            None => Some(None),
            Some(t) => self.string(t, &tp).map(Some),
        };
        let kind = kind?;
        let text = text?;
        match &text {
            Some(t) if t.trim().is_empty() => {
                self.push(
                    ValidationErrorKind::EmptyInstructionText,
                    tp,
                    "instruction_text must not be blank",
                );
                return None;
            }
            None if kind.requires_instruction_text() => {
                self.push(
                    ValidationErrorKind::EmptyInstructionText,
                    tp,
                    format!("directive kind {} requires instruction_text", kind.as_str()),
                );
                return None;
            }
            _ => {}
        }
        Some(BehaviorDirective::new(kind, text))
    }

    fn rubric(&mut self, v: &Value) -> Option<RubricDefinition> {
        let path = "rubric";
        let obj = self.object(v, path, &["levels_per_dimension", "weights"])?;
        let levels = match Self::optional(obj, "levels_per_dimension") {
            None => Some(DEFAULT_LEVELS_PER_DIMENSION),
            Some(l) => {
                let lp = join(path, "levels_per_dimension");
                match l.as_u64() {
                    Some(n) if (2..=u8::MAX as u64).contains(&n) => Some(n as u8),
                    _ => {
                        self.push(
                            ValidationErrorKind::InvalidValue,
                            lp,
                            "expected an integer between 2 and 255",
                        );
                        None
                    }
                }
            }
        };
        let weights = match Self::optional(obj, "weights") {
            None => Some([0.2; 5]),
            Some(w) => self.weights(w, &join(path, "weights")),
        };
        Some(RubricDefinition {
            levels_per_dimension: levels?,
            weights: weights?,
        })
    }

    fn weights(&mut self, v: &Value, path: &str) -> Option<[f64; 5]> {
        let names: Vec<&str> = RubricDimension::ALL.iter().map(|d| d.as_str()).collect();
        let obj = self.object(v, path, &names)?;
        let mut out = [0.0; 5];
        let mut ok = true;
        for dim in RubricDimension::ALL {
            let wp = join(path, dim.as_str());
            match self
                .required(obj, path, dim.as_str())
                .and_then(|w| self.number(w, &wp))
            {
                Some(n) if n >= 0.0 => out[dim.index()] = n,
                Some(_) => {
                    self.push(
                        ValidationErrorKind::InvalidValue,
                        wp,
                        "weight must be non-negative",
                    );
                    ok = false;
                }
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        let sum: f64 = out.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            self.push(
                ValidationErrorKind::InvalidValue,
                path,
                format!("weights must sum to 1, got {sum}"),
            );
            return None;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "exam_id": "sec-101-final",
            "title": "Security final",
            "opens_at": "2025-12-03T18:00:00Z",
            "closes_at": "2025-12-03T21:00:00Z",
            "authors": ["prof"],
            "enrolled_students": ["s1"],
            "tool_registry": [
                {"tool_id": "gpt5", "kind": "chat_model", "provider_ref": "mock", "display_name": "GPT5"}
            ],
            "questions": [
                {
                    "question_id": "q1",
                    "body": "Is zero trust achievable?",
                    "policies": [
                        {"tool_id": "gpt5", "enabled": true, "directive": {"kind": "unrestricted"}}
                    ]
                }
            ]
        })
    }

    fn errors(doc: Value) -> ValidationErrors {
        validate_exam_config(&doc).expect_err("document should be rejected")
    }

    #[test]
    fn minimal_document_is_valid() {
        let exam = validate_exam_config(&minimal()).unwrap();
        assert_eq!(exam.questions.len(), 1);
        assert_eq!(exam.questions[0].weight, 1.0);
        assert_eq!(exam.rubric, RubricDefinition::default());
    }

    #[test]
    fn unknown_tool_reference_names_the_path() {
        let mut doc = minimal();
        doc["tool_registry"][0]["tool_id"] = json!("llama");
        let errs = errors(doc);
        assert!(errs.has(
            ValidationErrorKind::UnknownToolReference,
            "questions[0].policies[0].tool_id"
        ));
    }

    #[test]
    fn fake_theory_without_text() {
        let mut doc = minimal();
        doc["questions"][0]["policies"][0]["directive"] =
            json!({"kind": "fake_theory", "instruction_text": ""});
        let errs = errors(doc);
        assert!(errs.has(
            ValidationErrorKind::EmptyInstructionText,
            "questions[0].policies[0].directive.instruction_text"
        ));
    }

    #[test]
    fn custom_without_text() {
        let mut doc = minimal();
        doc["questions"][0]["policies"][0]["directive"] = json!({"kind": "custom"});
        assert!(errors(doc).has(
            ValidationErrorKind::EmptyInstructionText,
            "questions[0].policies[0].directive.instruction_text"
        ));
    }

    #[test]
    fn blank_override_on_defaulted_kind() {
        let mut doc = minimal();
        doc["questions"][0]["policies"][0]["directive"] =
            json!({"kind": "no_final_answer", "instruction_text": "   "});
        assert!(errors(doc).has(
            ValidationErrorKind::EmptyInstructionText,
            "questions[0].policies[0].directive.instruction_text"
        ));
    }

    #[test]
    fn time_window_must_be_positive() {
        let mut doc = minimal();
        doc["closes_at"] = doc["opens_at"].clone();
        assert!(errors(doc).has(ValidationErrorKind::InvalidTimeWindow, "closes_at"));
    }

    #[test]
    fn needs_a_question() {
        let mut doc = minimal();
        doc["questions"] = json!([]);
        assert!(errors(doc).has(ValidationErrorKind::InvalidValue, "questions"));
    }

    #[test]
    fn question_ids_unique() {
        let mut doc = minimal();
        let q = doc["questions"][0].clone();
        doc["questions"].as_array_mut().unwrap().push(q);
        assert!(errors(doc).has(ValidationErrorKind::DuplicateId, "questions[1].question_id"));
    }

    #[test]
    fn tool_ids_unique() {
        let mut doc = minimal();
        let t = doc["tool_registry"][0].clone();
        doc["tool_registry"].as_array_mut().unwrap().push(t);
        assert!(errors(doc).has(ValidationErrorKind::DuplicateId, "tool_registry[1].tool_id"));
    }

    #[test]
    fn one_policy_per_tool() {
        let mut doc = minimal();
        let p = doc["questions"][0]["policies"][0].clone();
        doc["questions"][0]["policies"]
            .as_array_mut()
            .unwrap()
            .push(p);
        assert!(errors(doc).has(
            ValidationErrorKind::DuplicateId,
            "questions[0].policies[1].tool_id"
        ));
    }

    #[test]
    fn weight_non_negative() {
        let mut doc = minimal();
        doc["questions"][0]["weight"] = json!(-1);
        assert!(errors(doc).has(ValidationErrorKind::InvalidValue, "questions[0].weight"));
    }

    #[test]
    fn unknown_tool_kind() {
        let mut doc = minimal();
        doc["tool_registry"][0]["kind"] = json!("oracle");
        assert!(errors(doc).has(ValidationErrorKind::InvalidValue, "tool_registry[0].kind"));
    }

    #[test]
    fn rubric_weights_sum() {
        let mut doc = minimal();
        doc["rubric"] = json!({"weights": {
            "understanding": 0.5, "reasoning": 0.5, "independence": 0.5,
            "improvement_over_time": 0.0, "recall_from_class_discussions": 0.0
        }});
        assert!(errors(doc).has(ValidationErrorKind::InvalidValue, "rubric.weights"));
    }

    #[test]
    fn rubric_needs_all_dimensions() {
        let mut doc = minimal();
        doc["rubric"] = json!({"weights": {"understanding": 1.0}});
        let errs = errors(doc);
        assert!(errs.has(
            ValidationErrorKind::MissingField,
            "rubric.weights.reasoning"
        ));
        assert!(errs.has(
            ValidationErrorKind::MissingField,
            "rubric.weights.recall_from_class_discussions"
        ));
    }

    #[test]
    fn reports_every_violation() {
        let mut doc = minimal();
        doc.as_object_mut().unwrap().remove("title");
        doc["closes_at"] = json!("2025-12-03T17:00:00Z");
        doc["questions"][0]["policies"][0]["tool_id"] = json!("gpt4");
        doc["questions"][0]["extra"] = json!(1);
        let errs = errors(doc);
        assert_eq!(errs.0.len(), 4, "{errs}");
        assert!(errs.has(ValidationErrorKind::MissingField, "title"));
        assert!(errs.has(ValidationErrorKind::InvalidTimeWindow, "closes_at"));
        assert!(errs.has(
            ValidationErrorKind::UnknownToolReference,
            "questions[0].policies[0].tool_id"
        ));
        assert!(errs.has(ValidationErrorKind::UnknownField, "questions[0].extra"));
    }

    #[test]
    fn non_object_roots_are_rejected() {
        for doc in [json!(null), json!(3), json!("exam"), json!([])] {
            assert!(errors(doc).has(ValidationErrorKind::WrongType, "$"));
        }
    }

    #[test]
    fn serialized_exam_revalidates_to_itself() {
        let exam = validate_exam_config(&minimal()).unwrap();
        let again = validate_exam_config(&serde_json::to_value(&exam).unwrap()).unwrap();
        assert_eq!(exam, again);
    }
}
