//! Exam sessions in which students may consult AI tools whose behavior the
//! instructor controls per question. Every interaction is kept as an
//! append-only, time-stamped reasoning trace for later rubric assessment.

pub mod analytics;
pub mod domain;
pub mod gateway;
pub mod session;
pub mod store;
pub mod time;
pub mod token;

pub use analytics::{compute_indicators, ConfidenceBand, ExamAnalytics, Indicators, RubricScore};
pub use domain::{default_instruction, validate_exam_config, Exam, ValidationErrors};
pub use gateway::{mock_complete, Gateway, GatewayConfig, ProviderRegistry, ProviderRequest};
pub use session::{SessionEngine, SessionError, TraceEvent};
pub use store::{FileStore, MemoryStore, TraceStore};
