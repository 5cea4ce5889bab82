//! Append-only event log in JSON Lines: `{seq, timestamp, kind, payload}`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rlsdp_core::{InferenceSettings, Method};
use serde::{Deserialize, Serialize};

use crate::cycle::{CycleResult, Prompt, VoteOutcome};
use crate::error::{EngineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    CycleOpened {
        cycle_id: u64,
        question: String,
    },
    ResponseSubmitted {
        cycle_id: u64,
        response_id: usize,
        participant: String,
        text: String,
    },
    VotingOpened {
        cycle_id: u64,
    },
    ExerciseAssigned {
        cycle_id: u64,
        exercise_id: usize,
        participant: String,
        prompt: Prompt,
    },
    VoteSubmitted {
        cycle_id: u64,
        exercise_id: usize,
        participant: String,
        outcome: VoteOutcome,
    },
    VotingClosed {
        cycle_id: u64,
        method: Method,
        settings: InferenceSettings,
    },
    InferenceCompleted {
        cycle_id: u64,
        result: CycleResult,
    },
    InferenceFailed {
        cycle_id: u64,
        message: String,
    },
}

impl Event {
    pub fn cycle_id(&self) -> u64 {
        match self {
            Event::CycleOpened { cycle_id, .. }
            | Event::ResponseSubmitted { cycle_id, .. }
            | Event::VotingOpened { cycle_id }
            | Event::ExerciseAssigned { cycle_id, .. }
            | Event::VoteSubmitted { cycle_id, .. }
            | Event::VotingClosed { cycle_id, .. }
            | Event::InferenceCompleted { cycle_id, .. }
            | Event::InferenceFailed { cycle_id, .. } => *cycle_id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Event::CycleOpened { .. } => "CycleOpened",
            Event::ResponseSubmitted { .. } => "ResponseSubmitted",
            Event::VotingOpened { .. } => "VotingOpened",
            Event::ExerciseAssigned { .. } => "ExerciseAssigned",
            Event::VoteSubmitted { .. } => "VoteSubmitted",
            Event::VotingClosed { .. } => "VotingClosed",
            Event::InferenceCompleted { .. } => "InferenceCompleted",
            Event::InferenceFailed { .. } => "InferenceFailed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Where live records are persisted as they are appended.
pub trait LogSink: Send {
    fn append(&mut self, record: &EventRecord) -> Result<()>;
}

/// Appends one JSON line per record and flushes after each, so a crash
/// loses at most the record being written.
pub struct FileSink {
    writer: BufWriter<File>,
}

impl FileSink {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(FileSink {
            writer: BufWriter::new(file),
        })
    }
}

impl LogSink for FileSink {
    fn append(&mut self, record: &EventRecord) -> Result<()> {
        self.writer.write_all(record.to_json_line()?.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Collects records in memory; handy for tests.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub lines: Vec<String>,
}

impl LogSink for MemorySink {
    fn append(&mut self, record: &EventRecord) -> Result<()> {
        self.lines.push(record.to_json_line()?);
        Ok(())
    }
}

/// Parses JSON Lines records, reporting the index of the first bad line.
/// Blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| EngineError::CorruptLog {
            index,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_log_file(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

pub fn write_records<W: Write>(records: &[EventRecord], mut writer: W) -> Result<()> {
    for record in records {
        writeln!(writer, "{}", record.to_json_line()?)?;
    }
    writer.flush()?;
    Ok(())
}
