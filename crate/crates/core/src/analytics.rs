//! Interaction indicators computed from traces, instructor-assigned rubric
//! scores, and the per-exam summary behind the analytics dashboard.
//!
//! Nothing here judges a student automatically. Indicators are counts and
//! durations; rubric levels come from an instructor.

use std::collections::HashSet;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    per_dimension, Exam, ExamId, InstructorId, QuestionId, RubricDefinition, RubricDimension,
    SessionId, StudentId,
};
use crate::session::{
    replay, EventPayload, QuestionState, StreamScope, StreamValidator, TraceEvent, TraceViolation,
};
use crate::time::{format_ts, seconds_between, serde_ts, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub prompt_count: u32,
    pub search_count: u32,
    /// Mean prompt length in characters; `None` without prompts.
    pub mean_prompt_length: Option<f64>,
    /// Seconds from the initial answer to the first AI prompt.
    pub time_to_first_prompt: Option<f64>,
    /// Seconds from the initial answer to the latest final answer, present
    /// only while the question is finalized.
    pub explore_duration: Option<f64>,
    pub revision_count: u32,
    /// Share of AI responses with at least one comment. 0/0 counts as 1.
    pub comment_coverage: f64,
    pub off_task_count: u32,
    /// Seconds of focus loss, summing only lost/regained pairs.
    pub off_task_total: f64,
}

impl Indicators {
    fn empty() -> Self {
        Self {
            prompt_count: 0,
            search_count: 0,
            mean_prompt_length: None,
            time_to_first_prompt: None,
            explore_duration: None,
            revision_count: 0,
            comment_coverage: 1.0,
            off_task_count: 0,
            off_task_total: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid trace: {0}")]
pub struct InvalidTrace(#[from] pub TraceViolation);

/// Indicators for one question stream, ignoring focus telemetry.
pub fn compute_indicators(trace: &[TraceEvent]) -> Result<Indicators, InvalidTrace> {
    compute_indicators_with_focus(trace, None, &[])
}

/// Indicators for one question stream. Focus events are paired over the whole
/// session `focus` stream, and a pair is attributed to `question` when the
/// client reported that question as active at focus loss.
pub fn compute_indicators_with_focus(
    trace: &[TraceEvent],
    question: Option<&QuestionId>,
    focus: &[TraceEvent],
) -> Result<Indicators, InvalidTrace> {
    let progress = replay(trace)?;
    let mut focus_check = StreamValidator::new(StreamScope::Focus);
    for e in focus {
        focus_check.push(e)?;
    }

    let mut ind = Indicators::empty();
    let mut initial_at: Option<Timestamp> = None;
    let mut first_prompt_at: Option<Timestamp> = None;
    let mut last_final_at: Option<Timestamp> = None;
    let mut prompt_chars = 0usize;
    let mut responses: Vec<u64> = Vec::new();
    let mut commented: HashSet<u64> = HashSet::new();

    for e in trace {
        match &e.payload {
            EventPayload::InitialAnswer(_) => initial_at = initial_at.or(Some(e.ts)),
            EventPayload::AiPrompt(p) => {
                ind.prompt_count += 1;
                prompt_chars += p.text.chars().count();
                first_prompt_at = first_prompt_at.or(Some(e.ts));
            }
            EventPayload::SearchQuery(_) => ind.search_count += 1,
            EventPayload::AiResponse(_) => responses.push(e.seq),
            EventPayload::AiComment(c) => {
                commented.insert(c.linked_seq);
            }
            EventPayload::Revision(_) => ind.revision_count += 1,
            EventPayload::FinalAnswer(_) => last_final_at = Some(e.ts),
            _ => {}
        }
    }

    if ind.prompt_count > 0 {
        ind.mean_prompt_length = Some(prompt_chars as f64 / f64::from(ind.prompt_count));
    }
    if let Some(start) = initial_at {
        ind.time_to_first_prompt = first_prompt_at.map(|p| seconds_between(start, p));
        if progress.state == QuestionState::Finalized {
            ind.explore_duration = last_final_at.map(|f| seconds_between(start, f));
        }
    }
    if !responses.is_empty() {
        let covered = responses.iter().filter(|s| commented.contains(s)).count();
        ind.comment_coverage = covered as f64 / responses.len() as f64;
    }

    if let Some(q) = question {
        let (count, total) = off_task(focus, q);
        ind.off_task_count = count;
        ind.off_task_total = total;
    }
    Ok(ind)
}

fn off_task(focus: &[TraceEvent], question: &QuestionId) -> (u32, f64) {
    let mut count = 0;
    let mut total = 0.0;
    // Latest unmatched loss; an earlier one whose regain never arrived is dropped.
    let mut pending: Option<(Timestamp, bool)> = None;
    for e in focus {
        match &e.payload {
            EventPayload::FocusLost(p) => {
                let ours = p.active_question.as_ref() == Some(question);
                if ours {
                    count += 1;
                }
                pending = Some((e.ts, ours));
            }
            EventPayload::FocusRegained(_) => {
                if let Some((lost_at, true)) = pending {
                    total += seconds_between(lost_at, e.ts);
                }
                pending = None;
            }
            _ => {}
        }
    }
    (count, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceBand {
    Low,
    Medium,
    High,
}

impl ConfidenceBand {
    pub const MEDIUM_FROM: f64 = 1.5;
    pub const HIGH_FROM: f64 = 3.0;
    /// Slack on the thresholds so that e.g. 0.2 * 15 lands in High.
    const EPS: f64 = 1e-9;

    pub fn for_overall(overall: f64) -> Self {
        if overall >= Self::HIGH_FROM - Self::EPS {
            ConfidenceBand::High
        } else if overall >= Self::MEDIUM_FROM - Self::EPS {
            ConfidenceBand::Medium
        } else {
            ConfidenceBand::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceBand::Low => "low",
            ConfidenceBand::Medium => "medium",
            ConfidenceBand::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RubricError {
    #[error("level {level} for {} is outside 0..={max}", .dimension.as_str())]
    LevelOutOfRange {
        dimension: RubricDimension,
        level: u8,
        max: u8,
    },
}

/// Weighted mean of the levels: `sum(weight * level)`.
pub fn overall_score(levels: &[u8; 5], rubric: &RubricDefinition) -> Result<f64, RubricError> {
    for dim in RubricDimension::ALL {
        let level = levels[dim.index()];
        if level > rubric.max_level() {
            return Err(RubricError::LevelOutOfRange {
                dimension: dim,
                level,
                max: rubric.max_level(),
            });
        }
    }
    Ok(RubricDimension::ALL
        .iter()
        .map(|d| rubric.weight(*d) * f64::from(levels[d.index()]))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricScore {
    pub session_id: SessionId,
    pub question_id: QuestionId,
    pub assessor_id: InstructorId,
    #[serde(with = "per_dimension")]
    pub levels: [u8; 5],
    #[serde(with = "per_dimension")]
    pub weights: [f64; 5],
    pub overall: f64,
    pub band: ConfidenceBand,
    pub notes: String,
    #[serde(with = "serde_ts")]
    pub scored_at: Timestamp,
}

#[allow(clippy::too_many_arguments)]
pub fn score_rubric(
    session_id: SessionId,
    question_id: QuestionId,
    levels: [u8; 5],
    rubric: &RubricDefinition,
    assessor_id: InstructorId,
    notes: String,
    scored_at: Timestamp,
) -> Result<RubricScore, RubricError> {
    let overall = overall_score(&levels, rubric)?;
    Ok(RubricScore {
        session_id,
        question_id,
        assessor_id,
        levels,
        weights: rubric.weights,
        overall,
        band: ConfidenceBand::for_overall(overall),
        notes,
        scored_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attendance {
    Present,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub question_id: QuestionId,
    pub state: QuestionState,
    pub indicators: Indicators,
    /// API path of this question's chronological trace.
    pub timeline: String,
    /// Every score ever assigned, oldest first.
    pub rubric_scores: Vec<RubricScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRow {
    pub student_id: StudentId,
    pub attendance: Attendance,
    pub session_id: Option<SessionId>,
    pub questions: Vec<QuestionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamAnalytics {
    pub exam_id: ExamId,
    pub rows: Vec<StudentRow>,
}

/// Everything stored for one session, as the summary needs it.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub session_id: SessionId,
    pub student_id: StudentId,
    pub events: Vec<TraceEvent>,
    pub scores: Vec<RubricScore>,
}

/// One row per enrolled student, in student-id order. Students without a
/// session are marked absent.
pub fn summarize(exam: &Exam, sessions: &[SessionData]) -> Result<ExamAnalytics, InvalidTrace> {
    let mut rows = Vec::with_capacity(exam.enrolled_students.len());
    for student in &exam.enrolled_students {
        let Some(data) = sessions.iter().find(|s| &s.student_id == student) else {
            rows.push(StudentRow {
                student_id: student.clone(),
                attendance: Attendance::Absent,
                session_id: None,
                questions: Vec::new(),
            });
            continue;
        };
        let focus: Vec<TraceEvent> = data
            .events
            .iter()
            .filter(|e| e.question_id.is_none())
            .cloned()
            .collect();
        let mut questions = Vec::with_capacity(exam.questions.len());
        for q in &exam.questions {
            let stream: Vec<TraceEvent> = data
                .events
                .iter()
                .filter(|e| e.question_id.as_ref() == Some(&q.question_id))
                .cloned()
                .collect();
            let state = replay(&stream)?.state;
            questions.push(QuestionRow {
                question_id: q.question_id.clone(),
                state,
                indicators: compute_indicators_with_focus(&stream, Some(&q.question_id), &focus)?,
                timeline: format!(
                    "/sessions/{}/trace?question_id={}",
                    data.session_id, q.question_id
                ),
                rubric_scores: data
                    .scores
                    .iter()
                    .filter(|s| s.question_id == q.question_id)
                    .cloned()
                    .collect(),
            });
        }
        rows.push(StudentRow {
            student_id: student.clone(),
            attendance: Attendance::Present,
            session_id: Some(data.session_id.clone()),
            questions,
        });
    }
    Ok(ExamAnalytics {
        exam_id: exam.exam_id.clone(),
        rows,
    })
}

/// Column order of the score report. Frozen; append new columns at the end.
pub const SCORE_REPORT_COLUMNS: [&str; 22] = [
    "student_id",
    "session_id",
    "question_id",
    "state",
    "prompt_count",
    "search_count",
    "mean_prompt_length",
    "time_to_first_prompt_s",
    "explore_duration_s",
    "revision_count",
    "comment_coverage",
    "off_task_count",
    "off_task_total_s",
    "understanding",
    "reasoning",
    "independence",
    "improvement_over_time",
    "recall_from_class_discussions",
    "overall",
    "band",
    "assessor_id",
    "scored_at",
];

fn num(v: f64) -> String {
    format!("{v:.3}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn state_str(state: QuestionState) -> &'static str {
    match state {
        QuestionState::AwaitingInitial => "awaiting_initial",
        QuestionState::Exploring => "exploring",
        QuestionState::Finalized => "finalized",
    }
}

/// Tab-separated score report: one row per (student, question), using the
/// latest rubric score when several exist. Absent students get one row per
/// question with state `absent` and empty indicator columns.
pub fn write_score_report<W: io::Write>(
    exam: &Exam,
    analytics: &ExamAnalytics,
    out: W,
) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SCORE_REPORT_COLUMNS)?;
    for row in &analytics.rows {
        match row.attendance {
            Attendance::Absent => {
                for q in &exam.questions {
                    let mut rec = vec![String::new(); SCORE_REPORT_COLUMNS.len()];
                    rec[0] = row.student_id.to_string();
                    rec[2] = q.question_id.to_string();
                    rec[3] = "absent".into();
                    w.write_record(&rec)?;
                }
            }
            Attendance::Present => {
                let session = row
                    .session_id
                    .as_ref()
                    .map(ToString::to_string)
                    .unwrap_or_default();
                for q in &row.questions {
                    let i = &q.indicators;
                    let mut rec = vec![
                        row.student_id.to_string(),
                        session.clone(),
                        q.question_id.to_string(),
                        state_str(q.state).to_owned(),
                        i.prompt_count.to_string(),
                        i.search_count.to_string(),
                        opt_num(i.mean_prompt_length),
                        opt_num(i.time_to_first_prompt),
                        opt_num(i.explore_duration),
                        i.revision_count.to_string(),
                        num(i.comment_coverage),
                        i.off_task_count.to_string(),
                        num(i.off_task_total),
                    ];
                    match q.rubric_scores.last() {
                        Some(s) => {
                            rec.extend(s.levels.iter().map(ToString::to_string));
                            rec.push(format!("{:.4}", s.overall));
                            rec.push(s.band.as_str().to_owned());
                            rec.push(s.assessor_id.to_string());
                            rec.push(format_ts(&s.scored_at));
                        }
                        None => rec.extend(std::iter::repeat_n(String::new(), 9)),
                    }
                    w.write_record(&rec)?;
                }
            }
        }
    }
    w.flush()
}

fn csv_writer<W: io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').from_writer(out)
}
