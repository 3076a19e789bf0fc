//! Intervention protocol: stage machine, the frame pipeline that drives
//! estimation, detection, feedback and haptics, the session log, and the
//! operator control channel.

mod control;
mod engine;
pub mod live;
mod log;
mod stage;

use thiserror::Error;

use crate::estimator::EstimatorError;
use crate::feedback::FeedbackError;
use crate::frame::FrameError;
use crate::gaitevents::GaitEventError;

pub use control::{ControlRequest, StatusSnapshot};
pub use engine::{
    run_session, weights_digest, Engine, FrameSource, SessionConfig, SessionFailure, StepOutput,
    VecSource, INGEST_TIMEOUT_US,
};
pub use log::{
    DistanceRecord, DistanceSource, Header, LogRecord, Pose, RecordBody, SessionLog, StanceRecord,
    ThresholdSource, SCHEMA_VERSION,
};
pub use stage::{Condition, ProtocolStage, StageDurations, StageEvent, StageMachine, BOUT_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{event:?} is not valid in stage {stage}")]
    InvalidTransition {
        stage: ProtocolStage,
        event: StageEvent,
    },
    #[error("ingest lost: no frame for {gap_us} us after t={last_t_us}")]
    IngestLost { last_t_us: u64, gap_us: u64 },
    #[error("device unreachable: {0}")]
    DeviceUnreachable(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("distance {meters} m at minute {minute} of {stage} is below {previous} m")]
    NonMonotoneDistance {
        stage: ProtocolStage,
        minute: u32,
        previous: f64,
        meters: f64,
    },
    #[error("minute {minute} is outside {stage}")]
    InvalidMinute { stage: ProtocolStage, minute: u32 },
    #[error("{0}")]
    Rejected(String),
    #[error("config: {0}")]
    Config(String),
    #[error("frame: {0}")]
    Frame(#[from] FrameError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("feedback: {0}")]
    Feedback(#[from] FeedbackError),
    #[error("gait events: {0}")]
    GaitEvents(#[from] GaitEventError),
    #[error("io: {0}")]
    Io(String),
}

impl SessionError {
    /// Stable short code used in log and control records.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidTransition { .. } => "invalid_transition",
            SessionError::IngestLost { .. } => "ingest_lost",
            SessionError::DeviceUnreachable(_) => "device_unreachable",
            SessionError::SchemaViolation(_) => "schema_violation",
            SessionError::CorruptLog { .. } => "corrupt_log",
            SessionError::NonMonotoneDistance { .. } => "non_monotone_distance",
            SessionError::InvalidMinute { .. } => "invalid_minute",
            SessionError::Rejected(_) => "rejected",
            SessionError::Config(_) => "config",
            SessionError::Frame(_) => "frame",
            SessionError::Estimator(_) => "estimator",
            SessionError::Feedback(_) => "feedback",
            SessionError::GaitEvents(_) => "gait_events",
            SessionError::Io(_) => "io",
        }
    }
}
