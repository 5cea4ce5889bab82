use thiserror::Error;

use crate::cycle::Phase;

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("question must not be empty")]
    EmptyQuestion,

    #[error("participant token must not be empty")]
    EmptyParticipant,

    #[error("cycle {live} is still live; close it before opening another")]
    ConcurrentCycle { live: u64 },

    #[error("no cycle with id {0}")]
    UnknownCycle(u64),

    #[error("cycle {cycle_id} is in phase {phase}, which does not allow {operation}")]
    WrongPhase {
        cycle_id: u64,
        phase: Phase,
        operation: &'static str,
    },

    #[error("participant {participant:?} has no eligible exercise left in cycle {cycle_id}")]
    Exhausted { cycle_id: u64, participant: String },

    #[error("exercise {exercise_id} was not assigned to participant {participant:?}")]
    UnassignedExercise { exercise_id: usize, participant: String },

    #[error("exercise {exercise_id} has already been answered")]
    DuplicateVote { exercise_id: usize },

    #[error("outcome does not match exercise {exercise_id}: {reason}")]
    InvalidOutcome { exercise_id: usize, reason: String },

    #[error("cycle {0} has no responses to infer over")]
    NoResponses(u64),

    #[error("results for cycle {0} are not ready")]
    ResultsNotReady(u64),

    #[error("inference failed for cycle {cycle_id}: {message}")]
    InferenceFailed { cycle_id: u64, message: String },

    #[error("corrupt event log at record {index}: {reason}")]
    CorruptLog { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] rlsdp_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EngineError {
    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::EmptyQuestion => "empty_question",
            EngineError::EmptyParticipant => "empty_participant",
            EngineError::ConcurrentCycle { .. } => "concurrent_cycle",
            EngineError::UnknownCycle(_) => "unknown_cycle",
            EngineError::WrongPhase { .. } => "wrong_phase",
            EngineError::Exhausted { .. } => "exhausted",
            EngineError::UnassignedExercise { .. } => "unassigned_exercise",
            EngineError::DuplicateVote { .. } => "duplicate_vote",
            EngineError::InvalidOutcome { .. } => "invalid_outcome",
            EngineError::NoResponses(_) => "no_responses",
            EngineError::ResultsNotReady(_) => "results_not_ready",
            EngineError::InferenceFailed { .. } => "inference_failed",
            EngineError::CorruptLog { .. } => "corrupt_log",
            EngineError::Config(_) => "invalid_config",
            EngineError::Core(_) => "core_error",
            EngineError::Io(_) => "io_error",
            EngineError::Json(_) => "json_error",
        }
    }
}
