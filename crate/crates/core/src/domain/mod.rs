//! Exams, questions, tools and the instructor's per-question control over AI
//! behavior.
//!
//! Values in this module are only ever constructed through
//! [`validate_exam_config`], so holding an [`Exam`] means every structural
//! invariant has already been checked.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{serde_ts, Timestamp};

pub use config::{validate_exam_config, ValidationError, ValidationErrorKind, ValidationErrors};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

string_id!(ExamId);
string_id!(QuestionId);
string_id!(ToolId);
string_id!(StudentId);
string_id!(InstructorId);
string_id!(
    /// Opaque session identifier (a random UUID when issued by the engine).
    SessionId
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exam {
    pub exam_id: ExamId,
    pub title: String,
    #[serde(with = "serde_ts")]
    pub opens_at: Timestamp,
    #[serde(with = "serde_ts")]
    pub closes_at: Timestamp,
    pub authors: BTreeSet<InstructorId>,
    pub enrolled_students: BTreeSet<StudentId>,
    pub tool_registry: Vec<ToolDescriptor>,
    pub questions: Vec<Question>,
    pub rubric: RubricDefinition,
}

impl Exam {
    pub fn question(&self, id: &QuestionId) -> Option<&Question> {
        self.questions.iter().find(|q| &q.question_id == id)
    }

    pub fn tool(&self, id: &ToolId) -> Option<&ToolDescriptor> {
        self.tool_registry.iter().find(|t| &t.tool_id == id)
    }

    /// `opens_at <= now < closes_at`
    pub fn is_open_at(&self, now: Timestamp) -> bool {
        self.opens_at <= now && now < self.closes_at
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: QuestionId,
    pub body: String,
    /// Named blobs (datasets, ciphertexts, protocol listings) shown with the body.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attachments: BTreeMap<String, String>,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructor_answer: Option<String>,
    #[serde(default)]
    pub policies: Vec<ToolPolicy>,
}

impl Question {
    pub fn policy(&self, tool: &ToolId) -> Option<&ToolPolicy> {
        self.policies.iter().find(|p| &p.tool_id == tool)
    }

    pub fn enabled_tools(&self) -> impl Iterator<Item = &ToolId> {
        self.policies
            .iter()
            .filter(|p| p.enabled)
            .map(|p| &p.tool_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    ChatModel,
    SearchEngine,
}

impl ToolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::ChatModel => "chat_model",
            ToolKind::SearchEngine => "search_engine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub tool_id: ToolId,
    pub kind: ToolKind,
    /// Key into the deployment's provider configuration.
    pub provider_ref: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPolicy {
    pub tool_id: ToolId,
    pub enabled: bool,
    /// Ignored by the gateway when `enabled` is false.
    pub directive: BehaviorDirective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveKind {
    Unrestricted,
    NoFinalAnswer,
    FlawedExplanation,
    FakeTheory,
    Custom,
}

impl DirectiveKind {
    pub const ALL: [DirectiveKind; 5] = [
        DirectiveKind::Unrestricted,
        DirectiveKind::NoFinalAnswer,
        DirectiveKind::FlawedExplanation,
        DirectiveKind::FakeTheory,
        DirectiveKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DirectiveKind::Unrestricted => "unrestricted",
            DirectiveKind::NoFinalAnswer => "no_final_answer",
            DirectiveKind::FlawedExplanation => "flawed_explanation",
            DirectiveKind::FakeTheory => "fake_theory",
            DirectiveKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Kinds that have no meaning without instructor-written text.
    pub fn requires_instruction_text(self) -> bool {
        matches!(self, DirectiveKind::FakeTheory | DirectiveKind::Custom)
    }
}

/// Default instruction for [`DirectiveKind::NoFinalAnswer`]. Part of the
/// external contract: changing it changes what deployed exams send to models.
pub const NO_FINAL_ANSWER_INSTRUCTION: &str = "You are assisting a student during an exam. \
Exam rule: do not provide the final answer; guide the student through the reasoning steps. \
Ask questions back, point at the concepts involved and let the student draw the conclusion.";

/// Default instruction for [`DirectiveKind::FlawedExplanation`].
pub const FLAWED_EXPLANATION_INSTRUCTION: &str = "You are assisting a student during an exam. \
Exam rule: generate plausible but incorrect explanations. Answer fluently and confidently, \
but build each explanation on at least one subtle flaw in reasoning or fact that a careful \
student can detect by verifying your claims. Never reveal that the explanation is flawed.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("directive kind `{}` has no default instruction", .0.as_str())]
pub struct NoDefault(pub DirectiveKind);

pub fn default_instruction(kind: DirectiveKind) -> Result<&'static str, NoDefault> {
    match kind {
        DirectiveKind::NoFinalAnswer => Ok(NO_FINAL_ANSWER_INSTRUCTION),
        DirectiveKind::FlawedExplanation => Ok(FLAWED_EXPLANATION_INSTRUCTION),
        DirectiveKind::Unrestricted | DirectiveKind::FakeTheory | DirectiveKind::Custom => {
            Err(NoDefault(kind))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorDirective {
    pub kind: DirectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_text: Option<String>,
}

impl BehaviorDirective {
    pub fn unrestricted() -> Self {
        Self {
            kind: DirectiveKind::Unrestricted,
            instruction_text: None,
        }
    }

    pub fn new(kind: DirectiveKind, instruction_text: Option<String>) -> Self {
        Self {
            kind,
            instruction_text,
        }
    }

    /// The text the gateway sends ahead of the conversation, if any.
    ///
    /// An override always wins; otherwise the kind's default applies.
    /// `Unrestricted` without override yields `None`.
    pub fn effective_instruction(&self) -> Option<&str> {
        match &self.instruction_text {
            Some(text) => Some(text.as_str()),
            None => default_instruction(self.kind).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricDimension {
    Understanding,
    Reasoning,
    Independence,
    ImprovementOverTime,
    RecallFromClassDiscussions,
}

impl RubricDimension {
    /// Fixed presentation and storage order.
    pub const ALL: [RubricDimension; 5] = [
        RubricDimension::Understanding,
        RubricDimension::Reasoning,
        RubricDimension::Independence,
        RubricDimension::ImprovementOverTime,
        RubricDimension::RecallFromClassDiscussions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RubricDimension::Understanding => "understanding",
            RubricDimension::Reasoning => "reasoning",
            RubricDimension::Independence => "independence",
            RubricDimension::ImprovementOverTime => "improvement_over_time",
            RubricDimension::RecallFromClassDiscussions => "recall_from_class_discussions",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const DEFAULT_LEVELS_PER_DIMENSION: u8 = 5;

/// Tolerance on the sum of rubric weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricDefinition {
    /// Levels run from 0 to `levels_per_dimension - 1`.
    pub levels_per_dimension: u8,
    #[serde(with = "per_dimension")]
    pub weights: [f64; 5],
}

impl Default for RubricDefinition {
    fn default() -> Self {
        Self {
            levels_per_dimension: DEFAULT_LEVELS_PER_DIMENSION,
            weights: [0.2; 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RubricDefinitionError {
    #[error("levels_per_dimension must be at least 2, got {0}")]
    TooFewLevels(u8),
    #[error("weight for {} must be a finite non-negative number, got {value}", .dimension.as_str())]
    BadWeight {
        dimension: RubricDimension,
        value: f64,
    },
    #[error("weights must sum to 1, got {0}")]
    WeightSum(f64),
}

impl RubricDefinition {
    pub fn new(levels_per_dimension: u8, weights: [f64; 5]) -> Result<Self, RubricDefinitionError> {
        if levels_per_dimension < 2 {
            return Err(RubricDefinitionError::TooFewLevels(levels_per_dimension));
        }
        for dimension in RubricDimension::ALL {
            let value = weights[dimension.index()];
            if !value.is_finite() || value < 0.0 {
                return Err(RubricDefinitionError::BadWeight { dimension, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(RubricDefinitionError::WeightSum(sum));
        }
        Ok(Self {
            levels_per_dimension,
            weights,
        })
    }

    pub fn weight(&self, dimension: RubricDimension) -> f64 {
        self.weights[dimension.index()]
    }

    pub fn max_level(&self) -> u8 {
        self.levels_per_dimension - 1
    }
}

/// serde adapter for `[T; 5]` indexed by [`RubricDimension`], written as a
/// map keyed by dimension name.
pub(crate) mod per_dimension {
    use std::collections::BTreeMap;

    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::RubricDimension;

    pub fn serialize<T: Serialize + Copy, S: Serializer>(
        values: &[T; 5],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<RubricDimension, T> = RubricDimension::ALL
            .into_iter()
            .map(|d| (d, values[d.index()]))
            .collect();
        map.serialize(s)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<[T; 5], D::Error>
    where
        T: Deserialize<'de> + Copy + Default,
        D: Deserializer<'de>,
    {
        let map = BTreeMap::<RubricDimension, T>::deserialize(d)?;
        let mut out = [T::default(); 5];
        for dim in RubricDimension::ALL {
            out[dim.index()] = *map
                .get(&dim)
                .ok_or_else(|| D::Error::custom(format!("missing value for {}", dim.as_str())))?;
        }
        Ok(out)
    }
}
