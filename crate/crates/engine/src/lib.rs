//! Runs live dialogue cycles: a question, free-text responses, agreement and
//! pair-choice voting, and confidence-tagged results from the core model.
//!
//! [`Engine`] is the synchronous state machine; every change it makes is an
//! [`Event`] appended to a JSON Lines log that [`Engine::replay`] can rebuild
//! the state from. [`server`] puts it behind HTTP and a WebSocket feed.

pub mod config;
pub mod crowd;
pub mod cycle;
pub mod engine;
pub mod error;
pub mod log;
pub mod schedule;
pub mod server;

pub use config::EngineConfig;
pub use crowd::{Crowd, CrowdSpec};
pub use cycle::{
    CycleResult, DialogueCycle, Exercise, LiveCounts, Phase, Prompt, Response, ResultRow, VoteCounts, VoteOutcome,
};
pub use engine::{
    Clock, Engine, EngineOptions, EngineState, InferenceDefaults, InferenceJob, SteppingClock, SystemClock, VoteAck,
};
pub use error::{EngineError, Result};
pub use log::{read_log_file, read_records, write_records, Event, EventRecord, FileSink, LogSink, MemorySink};
pub use schedule::{choose_prompt, SchedulePolicy};
