//! The dialogue-cycle state machine.
//!
//! Every mutation is expressed as an [`Event`], checked against the current
//! state, persisted, and only then applied. Replay runs the same check and
//! apply steps over a recorded log, so a replayed engine cannot drift from
//! the live one.

use std::time::Instant;

use chrono::{DateTime, SubsecRound, Utc};
use rlsdp_core::aggregation::{binomial_estimate, posterior_summary, AgreementEstimate};
use rlsdp_core::{
    binomial_posterior, fit_map, hmc_sample, swa_sample, Dataset, ExerciseEvent, InferenceSettings, Method,
};
use serde::{Deserialize, Serialize};

use crate::cycle::{
    CycleResult, DialogueCycle, Exercise, PendingInference, Phase, Prompt, Response, ResultRow, VoteCounts, VoteOutcome,
};
use crate::error::{EngineError, Result};
use crate::log::{Event, EventRecord, LogSink};
use crate::schedule::{choose_prompt, SchedulePolicy};

pub trait Clock: Send {
    fn now(&self) -> DateTime<Utc>;
}

/// Wall clock truncated to milliseconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now().trunc_subsecs(3)
    }
}

/// Deterministic clock for tests: starts at `start` and advances by
/// `step_ms` on every reading.
#[derive(Debug)]
pub struct SteppingClock {
    next: std::sync::Mutex<DateTime<Utc>>,
    step: chrono::Duration,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        SteppingClock {
            next: std::sync::Mutex::new(start),
            step: chrono::Duration::milliseconds(step_ms),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let mut next = self.next.lock().expect("clock mutex poisoned");
        let now = *next;
        *next = now + self.step;
        now
    }
}

/// Inference defaults used when a cycle is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceDefaults {
    pub method: Method,
    pub settings: InferenceSettings,
    /// Base seed; cycle `k` runs with `seed + k`.
    pub seed: u64,
}

impl Default for InferenceDefaults {
    fn default() -> Self {
        InferenceDefaults {
            method: Method::Swa,
            settings: InferenceSettings::desk_scale(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub policy: SchedulePolicy,
    pub inference: InferenceDefaults,
}

/// Everything replay must reproduce.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub last_seq: u64,
    pub cycles: Vec<DialogueCycle>,
}

impl EngineState {
    pub fn cycle(&self, cycle_id: u64) -> Result<&DialogueCycle> {
        cycle_id
            .checked_sub(1)
            .and_then(|k| self.cycles.get(k as usize))
            .ok_or(EngineError::UnknownCycle(cycle_id))
    }

    fn cycle_mut(&mut self, cycle_id: u64) -> Result<&mut DialogueCycle> {
        cycle_id
            .checked_sub(1)
            .and_then(|k| self.cycles.get_mut(k as usize))
            .ok_or(EngineError::UnknownCycle(cycle_id))
    }

    pub fn live_cycle(&self) -> Option<&DialogueCycle> {
        self.cycles.iter().find(|c| c.phase.is_live())
    }

    /// Canonical JSON used to compare a replayed state with a live one.
    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn require_phase(cycle: &DialogueCycle, allowed: &[Phase], operation: &'static str) -> Result<()> {
    if allowed.contains(&cycle.phase) {
        Ok(())
    } else {
        Err(EngineError::WrongPhase {
            cycle_id: cycle.cycle_id,
            phase: cycle.phase,
            operation,
        })
    }
}

fn require_participant(token: &str) -> Result<()> {
    if token.trim().is_empty() {
        Err(EngineError::EmptyParticipant)
    } else {
        Ok(())
    }
}

/// Turns an answered prompt into a model event for participant index `who`.
fn to_model_event(prompt: Prompt, outcome: VoteOutcome, who: usize, exercise_id: usize) -> Result<ExerciseEvent> {
    let invalid = |reason: &str| EngineError::InvalidOutcome {
        exercise_id,
        reason: reason.to_owned(),
    };
    match (prompt, outcome) {
        (Prompt::Agreement { response }, VoteOutcome::Agreement { agreed }) => {
            Ok(ExerciseEvent::agreement(who, response, agreed))
        }
        (Prompt::PairChoice { first, second }, VoteOutcome::Choice { winner }) => {
            if winner == first {
                Ok(ExerciseEvent::pair_choice(who, first, second))
            } else if winner == second {
                Ok(ExerciseEvent::pair_choice(who, second, first))
            } else {
                Err(invalid("winner is not one of the two offered responses"))
            }
        }
        (Prompt::Agreement { .. }, VoteOutcome::Choice { .. }) => {
            Err(invalid("agreement prompt needs an `agreed` outcome"))
        }
        (Prompt::PairChoice { .. }, VoteOutcome::Agreement { .. }) => {
            Err(invalid("pair-choice prompt needs a `winner` outcome"))
        }
    }
}

/// Checks that `event` is a legal next step from `state`.
fn validate(state: &EngineState, event: &Event) -> Result<()> {
    match event {
        Event::CycleOpened { cycle_id, question } => {
            if question.trim().is_empty() {
                return Err(EngineError::EmptyQuestion);
            }
            if let Some(live) = state.live_cycle() {
                return Err(EngineError::ConcurrentCycle { live: live.cycle_id });
            }
            let expected = state.cycles.len() as u64 + 1;
            if *cycle_id != expected {
                return Err(EngineError::CorruptLog {
                    index: 0,
                    reason: format!("cycle id {cycle_id}, expected {expected}"),
                });
            }
        }
        Event::ResponseSubmitted {
            cycle_id,
            response_id,
            participant,
            ..
        } => {
            let cycle = state.cycle(*cycle_id)?;
            require_phase(cycle, &[Phase::QuestionOpen, Phase::Voting], "submitting responses")?;
            require_participant(participant)?;
            if *response_id != cycle.responses.len() {
                return Err(EngineError::CorruptLog {
                    index: 0,
                    reason: format!("response id {response_id}, expected {}", cycle.responses.len()),
                });
            }
        }
        Event::VotingOpened { cycle_id } => {
            require_phase(state.cycle(*cycle_id)?, &[Phase::QuestionOpen], "opening voting")?;
        }
        Event::ExerciseAssigned {
            cycle_id,
            exercise_id,
            participant,
            prompt,
        } => {
            let cycle = state.cycle(*cycle_id)?;
            require_phase(cycle, &[Phase::Voting], "assigning exercises")?;
            require_participant(participant)?;
            let m = cycle.responses.len();
            let in_range = match *prompt {
                Prompt::Agreement { response } => response < m,
                Prompt::PairChoice { first, second } => first < m && second < m && first != second,
            };
            if !in_range || *exercise_id != cycle.exercises.len() {
                return Err(EngineError::CorruptLog {
                    index: 0,
                    reason: format!("exercise {exercise_id} does not fit cycle {cycle_id}"),
                });
            }
        }
        Event::VoteSubmitted {
            cycle_id,
            exercise_id,
            participant,
            outcome,
        } => {
            let cycle = state.cycle(*cycle_id)?;
            require_phase(cycle, &[Phase::Voting], "submitting votes")?;
            let exercise = cycle
                .exercises
                .get(*exercise_id)
                .filter(|e| &e.participant == participant)
                .ok_or_else(|| EngineError::UnassignedExercise {
                    exercise_id: *exercise_id,
                    participant: participant.clone(),
                })?;
            if exercise.answer.is_some() {
                return Err(EngineError::DuplicateVote {
                    exercise_id: *exercise_id,
                });
            }
            to_model_event(exercise.prompt, *outcome, 0, *exercise_id)?;
        }
        Event::VotingClosed { cycle_id, settings, .. } => {
            let cycle = state.cycle(*cycle_id)?;
            require_phase(cycle, &[Phase::Voting], "closing voting")?;
            if cycle.responses.is_empty() {
                return Err(EngineError::NoResponses(*cycle_id));
            }
            settings.validate()?;
        }
        Event::InferenceCompleted { cycle_id, result } => {
            let cycle = state.cycle(*cycle_id)?;
            require_phase(cycle, &[Phase::Inferring], "completing inference")?;
            if result.cycle_id != *cycle_id || result.rows.len() != cycle.responses.len() {
                return Err(EngineError::CorruptLog {
                    index: 0,
                    reason: format!("result does not belong to cycle {cycle_id}"),
                });
            }
        }
        Event::InferenceFailed { cycle_id, .. } => {
            require_phase(state.cycle(*cycle_id)?, &[Phase::Inferring], "failing inference")?;
        }
    }
    Ok(())
}

/// Applies an already validated record.
fn mutate(state: &mut EngineState, record: &EventRecord) -> Result<()> {
    let at = record.timestamp;
    state.last_seq = record.seq;
    match &record.event {
        Event::CycleOpened { cycle_id, question } => {
            state.cycles.push(DialogueCycle::new(*cycle_id, question.clone(), at));
        }
        Event::ResponseSubmitted {
            cycle_id,
            response_id,
            participant,
            text,
        } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            cycle.enroll(participant);
            cycle.responses.push(Response {
                response_id: *response_id,
                participant: participant.clone(),
                text: text.clone(),
            });
        }
        Event::VotingOpened { cycle_id } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            cycle.phase = Phase::Voting;
            cycle.voting_opened_at = Some(at);
        }
        Event::ExerciseAssigned {
            cycle_id,
            exercise_id,
            participant,
            prompt,
        } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            cycle.enroll(participant);
            cycle.exercises.push(Exercise {
                exercise_id: *exercise_id,
                participant: participant.clone(),
                prompt: *prompt,
                answer: None,
            });
        }
        Event::VoteSubmitted {
            cycle_id,
            exercise_id,
            participant,
            outcome,
        } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            let who = cycle.enroll(participant);
            let exercise = &mut cycle.exercises[*exercise_id];
            exercise.answer = Some(*outcome);
            let event = to_model_event(exercise.prompt, *outcome, who, *exercise_id)?;
            cycle.votes.push(event);
        }
        Event::VotingClosed {
            cycle_id,
            method,
            settings,
        } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            cycle.phase = Phase::Inferring;
            cycle.closed_at = Some(at);
            cycle.pending = Some(PendingInference {
                method: *method,
                settings: settings.clone(),
            });
        }
        Event::InferenceCompleted { cycle_id, result } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            cycle.phase = Phase::ResultsReady;
            cycle.pending = None;
            cycle.last_error = None;
            cycle.result = Some(result.clone());
        }
        Event::InferenceFailed { cycle_id, message } => {
            let cycle = state.cycle_mut(*cycle_id)?;
            cycle.phase = Phase::Voting;
            cycle.pending = None;
            cycle.closed_at = None;
            cycle.last_error = Some(message.clone());
        }
    }
    Ok(())
}

/// A frozen snapshot of a closed cycle, ready to run off the engine lock.
#[derive(Debug, Clone)]
pub struct InferenceJob {
    pub cycle_id: u64,
    pub method: Method,
    pub settings: InferenceSettings,
    pub dataset: Dataset,
    texts: Vec<String>,
    counts: Vec<VoteCounts>,
}

impl InferenceJob {
    fn from_cycle(cycle: &DialogueCycle, method: Method, settings: InferenceSettings) -> Result<Self> {
        Ok(InferenceJob {
            cycle_id: cycle.cycle_id,
            method,
            settings,
            dataset: cycle.dataset()?,
            texts: cycle.responses.iter().map(|r| r.text.clone()).collect(),
            counts: cycle.vote_counts(),
        })
    }

    fn estimate(&self) -> Result<AgreementEstimate<f64>> {
        let data = &self.dataset;
        if self.method == Method::Binomial {
            return Ok(binomial_estimate(&binomial_posterior::<f64>(data)));
        }
        let model = self.settings.model.resolve(data.n_participants(), data.n_responses())?;
        let map = fit_map(data, &model, &self.settings.map)?;
        let samples = match self.method {
            Method::Swa => swa_sample(data, &map, &model, &self.settings.swa)?,
            _ => hmc_sample(data, &map, &model, &self.settings.hmc)?,
        };
        Ok(posterior_summary(&samples)?)
    }

    /// Runs the configured pipeline and assembles the sorted result.
    pub fn run(&self) -> Result<CycleResult> {
        let started = Instant::now();
        let estimate = self.estimate()?;
        let wall_clock_seconds = started.elapsed().as_secs_f64();

        let mut rows = Vec::with_capacity(self.texts.len());
        for (j, text) in self.texts.iter().enumerate() {
            let (mean, std) = (estimate.mean_agreement[j], estimate.std_agreement[j]);
            if !(mean.is_finite() && std.is_finite()) {
                return Err(EngineError::InferenceFailed {
                    cycle_id: self.cycle_id,
                    message: format!("response {j} has no finite confidence"),
                });
            }
            rows.push(ResultRow {
                response_id: j,
                text: text.clone(),
                mean_agreement: mean,
                std_agreement: std,
                votes: self.counts[j],
            });
        }
        rows.sort_by(|a, b| {
            b.mean_agreement
                .total_cmp(&a.mean_agreement)
                .then(a.response_id.cmp(&b.response_id))
        });
        Ok(CycleResult {
            cycle_id: self.cycle_id,
            method: self.method,
            wall_clock_seconds,
            n_participants: self.dataset.n_participants(),
            n_votes: self.dataset.len(),
            seed: self.settings.map.seed,
            rows,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteAck {
    pub exercise_id: usize,
    pub n_votes: usize,
}

pub struct Engine {
    state: EngineState,
    options: EngineOptions,
    records: Vec<EventRecord>,
    sink: Option<Box<dyn LogSink>>,
    clock: Box<dyn Clock>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("state", &self.state)
            .field("options", &self.options)
            .field("records", &self.records.len())
            .finish()
    }
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(EngineOptions::default())
    }
}

impl Engine {
    pub fn new(options: EngineOptions) -> Self {
        Engine {
            state: EngineState::default(),
            options,
            records: Vec::new(),
            sink: None,
            clock: Box::new(SystemClock),
        }
    }

    pub fn with_sink(mut self, sink: impl LogSink + 'static) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Records with sequence number greater than `seq`.
    pub fn records_since(&self, seq: u64) -> &[EventRecord] {
        let start = self.records.partition_point(|r| r.seq <= seq);
        &self.records[start..]
    }

    pub fn cycle(&self, cycle_id: u64) -> Result<&DialogueCycle> {
        self.state.cycle(cycle_id)
    }

    pub fn live_cycle(&self) -> Option<&DialogueCycle> {
        self.state.live_cycle()
    }

    fn commit(&mut self, event: Event) -> Result<&EventRecord> {
        validate(&self.state, &event)?;
        let record = EventRecord {
            seq: self.state.last_seq + 1,
            timestamp: self.clock.now(),
            event,
        };
        if let Some(sink) = self.sink.as_mut() {
            sink.append(&record)?;
        }
        mutate(&mut self.state, &record)?;
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Rebuilds an engine from a recorded log. The result holds the same
    /// records, so it can keep appending where the log ended.
    pub fn replay(options: EngineOptions, records: impl IntoIterator<Item = EventRecord>) -> Result<Self> {
        let mut engine = Engine::new(options);
        for (index, record) in records.into_iter().enumerate() {
            let corrupt = |reason: String| EngineError::CorruptLog { index, reason };
            if record.seq != engine.state.last_seq + 1 {
                return Err(corrupt(format!(
                    "sequence number {}, expected {}",
                    record.seq,
                    engine.state.last_seq + 1
                )));
            }
            validate(&engine.state, &record.event).map_err(|e| corrupt(e.to_string()))?;
            mutate(&mut engine.state, &record).map_err(|e| corrupt(e.to_string()))?;
            engine.records.push(record);
        }
        Ok(engine)
    }

    pub fn open_cycle(&mut self, question: &str) -> Result<u64> {
        let cycle_id = self.state.cycles.len() as u64 + 1;
        self.commit(Event::CycleOpened {
            cycle_id,
            question: question.to_owned(),
        })?;
        Ok(cycle_id)
    }

    pub fn submit_response(&mut self, cycle_id: u64, participant: &str, text: &str) -> Result<usize> {
        let response_id = self.state.cycle(cycle_id)?.responses.len();
        self.commit(Event::ResponseSubmitted {
            cycle_id,
            response_id,
            participant: participant.to_owned(),
            text: text.to_owned(),
        })?;
        Ok(response_id)
    }

    /// Moves a cycle from collecting responses to collecting votes. Responses
    /// are still accepted afterwards.
    pub fn open_voting(&mut self, cycle_id: u64) -> Result<()> {
        self.commit(Event::VotingOpened { cycle_id })?;
        Ok(())
    }

    pub fn next_exercise(&mut self, cycle_id: u64, participant: &str) -> Result<Exercise> {
        let cycle = self.state.cycle(cycle_id)?;
        require_phase(cycle, &[Phase::Voting], "assigning exercises")?;
        require_participant(participant)?;
        let prompt = choose_prompt(cycle, participant, &self.options.policy).ok_or_else(|| EngineError::Exhausted {
            cycle_id,
            participant: participant.to_owned(),
        })?;
        let exercise_id = cycle.exercises.len();
        self.commit(Event::ExerciseAssigned {
            cycle_id,
            exercise_id,
            participant: participant.to_owned(),
            prompt,
        })?;
        Ok(self.state.cycle(cycle_id)?.exercises[exercise_id].clone())
    }

    pub fn submit_vote(
        &mut self,
        cycle_id: u64,
        participant: &str,
        exercise_id: usize,
        outcome: VoteOutcome,
    ) -> Result<VoteAck> {
        self.commit(Event::VoteSubmitted {
            cycle_id,
            exercise_id,
            participant: participant.to_owned(),
            outcome,
        })?;
        Ok(VoteAck {
            exercise_id,
            n_votes: self.state.cycle(cycle_id)?.votes.len(),
        })
    }

    /// Closes voting and freezes the votes into a job. The cycle stays in
    /// `Inferring` until [`Engine::finish_inference`] is called.
    pub fn begin_close(&mut self, cycle_id: u64, method: Option<Method>) -> Result<InferenceJob> {
        let method = method.unwrap_or(self.options.inference.method);
        let settings = self
            .options
            .inference
            .settings
            .clone()
            .with_seed(self.options.inference.seed.wrapping_add(cycle_id));
        self.commit(Event::VotingClosed {
            cycle_id,
            method,
            settings: settings.clone(),
        })?;
        InferenceJob::from_cycle(self.state.cycle(cycle_id)?, method, settings)
    }

    /// Rebuilds the job of a cycle left in `Inferring`, as after a restart
    /// between close and completion.
    pub fn pending_job(&self, cycle_id: u64) -> Result<InferenceJob> {
        let cycle = self.state.cycle(cycle_id)?;
        require_phase(cycle, &[Phase::Inferring], "resuming inference")?;
        let pending = cycle.pending.as_ref().expect("inferring cycles carry their request");
        InferenceJob::from_cycle(cycle, pending.method, pending.settings.clone())
    }

    /// Records the outcome of a job. On failure the cycle returns to
    /// `Voting` so the close can be retried.
    pub fn finish_inference(&mut self, cycle_id: u64, outcome: Result<CycleResult>) -> Result<CycleResult> {
        match outcome {
            Ok(result) => {
                self.commit(Event::InferenceCompleted {
                    cycle_id,
                    result: result.clone(),
                })?;
                Ok(result)
            }
            Err(err) => {
                let message = match err {
                    EngineError::InferenceFailed { message, .. } => message,
                    other => other.to_string(),
                };
                self.commit(Event::InferenceFailed {
                    cycle_id,
                    message: message.clone(),
                })?;
                Err(EngineError::InferenceFailed { cycle_id, message })
            }
        }
    }

    /// Close, infer and record in one call, holding `self` throughout.
    pub fn close_voting_and_infer(&mut self, cycle_id: u64, method: Option<Method>) -> Result<CycleResult> {
        let job = self.begin_close(cycle_id, method)?;
        let outcome = job.run();
        self.finish_inference(cycle_id, outcome)
    }

    pub fn get_results(&self, cycle_id: u64) -> Result<&CycleResult> {
        self.state
            .cycle(cycle_id)?
            .result
            .as_ref()
            .ok_or(EngineError::ResultsNotReady(cycle_id))
    }
}
