//! HTTP and WebSocket front end for an [`Engine`].
//!
//! All handlers share one engine behind a mutex that is never held across an
//! await point. Inference runs on the blocking pool with the lock released,
//! so status requests and the live feed keep working while a cycle is in
//! `Inferring`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use rlsdp_core::Method;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::crowd::{Crowd, CrowdSpec};
use crate::cycle::{CycleResult, DialogueCycle, LiveCounts, Phase, Prompt, Response as CycleResponse, VoteOutcome};
use crate::engine::Engine;
use crate::error::EngineError;

/// Pushed to every WebSocket client after each logged event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notice {
    pub seq: u64,
    pub kind: String,
    pub cycle_id: u64,
    pub phase: Phase,
    pub counts: LiveCounts,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<CycleResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

struct Inner {
    engine: Engine,
    published: u64,
}

pub struct AppState {
    inner: Mutex<Inner>,
    notices: broadcast::Sender<Notice>,
    auto_close: Option<Duration>,
}

pub type SharedState = Arc<AppState>;

/// Lock guard that publishes any new records when dropped.
struct Guard<'a> {
    inner: MutexGuard<'a, Inner>,
    notices: &'a broadcast::Sender<Notice>,
}

impl std::ops::Deref for Guard<'_> {
    type Target = Engine;
    fn deref(&self) -> &Engine {
        &self.inner.engine
    }
}

impl std::ops::DerefMut for Guard<'_> {
    fn deref_mut(&mut self) -> &mut Engine {
        &mut self.inner.engine
    }
}

impl Drop for Guard<'_> {
    fn drop(&mut self) {
        let inner = &mut *self.inner;
        for record in inner.engine.records_since(inner.published) {
            let Ok(cycle) = inner.engine.cycle(record.event.cycle_id()) else {
                continue;
            };
            let error = match &record.event {
                crate::log::Event::InferenceFailed { message, .. } => Some(message.clone()),
                _ => None,
            };
            // no receivers is not an error
            let _ = self.notices.send(Notice {
                seq: record.seq,
                kind: record.event.kind().to_owned(),
                cycle_id: cycle.cycle_id,
                phase: cycle.phase,
                counts: cycle.counts(),
                result: match &record.event {
                    crate::log::Event::InferenceCompleted { result, .. } => Some(result.clone()),
                    _ => None,
                },
                error,
            });
            inner.published = record.seq;
        }
    }
}

impl AppState {
    pub fn new(engine: Engine, auto_close: Option<Duration>) -> SharedState {
        let (notices, _) = broadcast::channel(1024);
        let published = engine.state().last_seq;
        Arc::new(AppState {
            inner: Mutex::new(Inner { engine, published }),
            notices,
            auto_close,
        })
    }

    fn lock(&self) -> Guard<'_> {
        Guard {
            inner: self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner()),
            notices: &self.notices,
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Notice> {
        self.notices.subscribe()
    }

    /// Runs `f` against the engine, publishing whatever it logged.
    pub fn with_engine<R>(&self, f: impl FnOnce(&mut Engine) -> R) -> R {
        let mut guard = self.lock();
        f(&mut guard)
    }
}

pub struct ApiError(EngineError);

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        ApiError(err)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub fn status_for(err: &EngineError) -> StatusCode {
    use EngineError::*;
    match err {
        EmptyQuestion | EmptyParticipant | InvalidOutcome { .. } | Config(_) | Json(_) => StatusCode::BAD_REQUEST,
        UnknownCycle(_) | UnassignedExercise { .. } => StatusCode::NOT_FOUND,
        ConcurrentCycle { .. }
        | WrongPhase { .. }
        | Exhausted { .. }
        | DuplicateVote { .. }
        | NoResponses(_)
        | ResultsNotReady(_) => StatusCode::CONFLICT,
        InferenceFailed { .. } | CorruptLog { .. } | Core(_) | Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.0.code().to_owned(),
            message: self.0.to_string(),
        };
        (status_for(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body; an empty body reads as `{}`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let text: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    Ok(serde_json::from_slice(text).map_err(EngineError::from)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub cycle_id: u64,
    pub question: String,
    pub phase: Phase,
    pub counts: LiveCounts,
    pub opened_at: DateTime<Utc>,
    pub voting_opened_at: Option<DateTime<Utc>>,
    pub closed_at: Option<DateTime<Utc>>,
    pub pending_method: Option<Method>,
    pub last_error: Option<String>,
    pub has_result: bool,
}

impl From<&DialogueCycle> for CycleSummary {
    fn from(cycle: &DialogueCycle) -> Self {
        CycleSummary {
            cycle_id: cycle.cycle_id,
            question: cycle.question.clone(),
            phase: cycle.phase,
            counts: cycle.counts(),
            opened_at: cycle.opened_at,
            voting_opened_at: cycle.voting_opened_at,
            closed_at: cycle.closed_at,
            pending_method: cycle.pending.as_ref().map(|p| p.method),
            last_error: cycle.last_error.clone(),
            has_result: cycle.result.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleDetail {
    #[serde(flatten)]
    pub summary: CycleSummary,
    pub responses: Vec<CycleResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptText {
    pub response_id: usize,
    pub text: String,
}

/// An assigned exercise together with the text it asks about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseView {
    pub cycle_id: u64,
    pub exercise_id: usize,
    pub participant: String,
    pub prompt: Prompt,
    pub responses: Vec<PromptText>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenCycleBody {
    question: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    participant: String,
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteBody {
    participant: String,
    exercise_id: usize,
    outcome: VoteOutcome,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CloseBody {
    method: Option<Method>,
    /// Respond only once inference has finished.
    wait: bool,
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/cycles", get(list_cycles).post(open_cycle))
        .route("/cycles/{id}", get(get_cycle))
        .route("/cycles/{id}/responses", post(submit_response))
        .route("/cycles/{id}/voting", post(open_voting))
        .route("/cycles/{id}/exercise", get(next_exercise))
        .route("/cycles/{id}/votes", post(submit_vote))
        .route("/cycles/{id}/close", post(close_cycle))
        .route("/cycles/{id}/results", get(get_results))
        .route("/demo/crowd", post(demo_crowd))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

async fn health(State(state): State<SharedState>) -> Json<serde_json::Value> {
    let (last_seq, live) = state.with_engine(|e| (e.state().last_seq, e.live_cycle().map(|c| c.cycle_id)));
    Json(serde_json::json!({ "status": "ok", "last_seq": last_seq, "live_cycle": live }))
}

async fn list_cycles(State(state): State<SharedState>) -> Json<Vec<CycleSummary>> {
    Json(state.with_engine(|e| e.state().cycles.iter().map(CycleSummary::from).collect()))
}

async fn open_cycle(State(state): State<SharedState>, body: Bytes) -> ApiResult<(StatusCode, Json<CycleSummary>)> {
    let body: OpenCycleBody = parse(&body)?;
    let summary = state.with_engine(|e| -> Result<_, EngineError> {
        let id = e.open_cycle(&body.question)?;
        Ok(CycleSummary::from(e.cycle(id)?))
    })?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_cycle(State(state): State<SharedState>, Path(id): Path<u64>) -> ApiResult<Json<CycleDetail>> {
    Ok(Json(state.with_engine(|e| -> Result<_, EngineError> {
        let cycle = e.cycle(id)?;
        Ok(CycleDetail {
            summary: cycle.into(),
            responses: cycle.responses.clone(),
        })
    })?))
}

async fn submit_response(
    State(state): State<SharedState>,
    Path(id): Path<u64>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let body: ResponseBody = parse(&body)?;
    let response_id = state.with_engine(|e| e.submit_response(id, &body.participant, &body.text))?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "cycle_id": id, "response_id": response_id })),
    ))
}

async fn open_voting(State(state): State<SharedState>, Path(id): Path<u64>) -> ApiResult<Json<CycleSummary>> {
    let summary = state.with_engine(|e| -> Result<_, EngineError> {
        e.open_voting(id)?;
        Ok(CycleSummary::from(e.cycle(id)?))
    })?;
    schedule_auto_close(&state, id);
    Ok(Json(summary))
}

async fn next_exercise(
    State(state): State<SharedState>,
    Path(id): Path<u64>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<ExerciseView>> {
    let participant = query.get("participant").map(String::as_str).unwrap_or("");
    Ok(Json(state.with_engine(|e| -> Result<_, EngineError> {
        let exercise = e.next_exercise(id, participant)?;
        let cycle = e.cycle(id)?;
        let ids = match exercise.prompt {
            Prompt::Agreement { response } => vec![response],
            Prompt::PairChoice { first, second } => vec![first, second],
        };
        Ok(ExerciseView {
            cycle_id: id,
            exercise_id: exercise.exercise_id,
            participant: exercise.participant,
            prompt: exercise.prompt,
            responses: ids
                .into_iter()
                .map(|j| PromptText {
                    response_id: j,
                    text: cycle.responses[j].text.clone(),
                })
                .collect(),
        })
    })?))
}

async fn submit_vote(
    State(state): State<SharedState>,
    Path(id): Path<u64>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<crate::engine::VoteAck>)> {
    let body: VoteBody = parse(&body)?;
    let ack = state.with_engine(|e| e.submit_vote(id, &body.participant, body.exercise_id, body.outcome))?;
    Ok((StatusCode::CREATED, Json(ack)))
}

/// Starts inference for a cycle that has just entered `Inferring` and
/// records the outcome when it finishes.
fn spawn_inference(
    state: &SharedState,
    job: crate::engine::InferenceJob,
) -> tokio::task::JoinHandle<Result<CycleResult, EngineError>> {
    let state = Arc::clone(state);
    tokio::spawn(async move {
        let cycle_id = job.cycle_id;
        let outcome = tokio::task::spawn_blocking(move || job.run())
            .await
            .unwrap_or_else(|join| {
                Err(EngineError::InferenceFailed {
                    cycle_id,
                    message: format!("inference task ended abnormally: {join}"),
                })
            });
        if let Err(err) = &outcome {
            tracing::warn!(cycle_id, %err, "inference failed");
        }
        state.with_engine(|e| e.finish_inference(cycle_id, outcome))
    })
}

/// Closes `id` and starts inference; the cycle is `Inferring` on return.
pub fn start_close(
    state: &SharedState,
    id: u64,
    method: Option<Method>,
) -> Result<tokio::task::JoinHandle<Result<CycleResult, EngineError>>, EngineError> {
    let job = state.with_engine(|e| e.begin_close(id, method))?;
    tracing::info!(cycle_id = id, method = %job.method, votes = job.dataset.len(), "voting closed");
    Ok(spawn_inference(state, job))
}

/// Restarts inference for cycles a previous process left in `Inferring`.
pub fn resume_pending(state: &SharedState) -> Vec<tokio::task::JoinHandle<Result<CycleResult, EngineError>>> {
    let jobs: Vec<_> = state.with_engine(|e| {
        e.state()
            .cycles
            .iter()
            .filter(|c| c.phase == Phase::Inferring)
            .filter_map(|c| e.pending_job(c.cycle_id).ok())
            .collect()
    });
    jobs.into_iter().map(|job| spawn_inference(state, job)).collect()
}

fn schedule_auto_close(state: &SharedState, id: u64) {
    let Some(delay) = state.auto_close else {
        return;
    };
    let state = Arc::clone(state);
    tokio::spawn(async move {
        tokio::time::sleep(delay).await;
        let still_voting = state.with_engine(|e| e.cycle(id).map(|c| c.phase == Phase::Voting).unwrap_or(false));
        if still_voting {
            if let Err(err) = start_close(&state, id, None) {
                tracing::warn!(cycle_id = id, %err, "auto-close failed");
            }
        }
    });
}

async fn close_cycle(State(state): State<SharedState>, Path(id): Path<u64>, body: Bytes) -> ApiResult<Response> {
    let body: CloseBody = parse(&body)?;
    let handle = start_close(&state, id, body.method)?;
    if body.wait {
        let result = handle.await.map_err(|join| EngineError::InferenceFailed {
            cycle_id: id,
            message: join.to_string(),
        })??;
        return Ok((StatusCode::OK, Json(result)).into_response());
    }
    let summary = state.with_engine(|e| e.cycle(id).map(CycleSummary::from))?;
    Ok((StatusCode::ACCEPTED, Json(summary)).into_response())
}

async fn get_results(State(state): State<SharedState>, Path(id): Path<u64>) -> ApiResult<Json<CycleResult>> {
    Ok(Json(state.with_engine(|e| e.get_results(id).cloned())?))
}

/// Runs a simulated crowd through a fresh cycle and leaves it in `Voting`.
async fn demo_crowd(State(state): State<SharedState>, body: Bytes) -> ApiResult<(StatusCode, Json<CycleSummary>)> {
    let spec: CrowdSpec = parse(&body)?;
    let crowd = Crowd::new(spec)?;
    let worker = Arc::clone(&state);
    let id = tokio::task::spawn_blocking(move || -> Result<u64, EngineError> {
        let id = worker.with_engine(|e| -> Result<u64, EngineError> {
            let id = e.open_cycle(&crowd.spec().question)?;
            crowd.submit_responses(e, id)?;
            e.open_voting(id)?;
            Ok(id)
        })?;
        // one lock per round so the feed and other requests interleave
        for _ in 0..crowd.spec().exercises_per_participant {
            for i in 0..crowd.spec().n_participants {
                worker.with_engine(|e| crowd.vote_once(e, id, i))?;
            }
        }
        Ok(id)
    })
    .await
    .map_err(|join| EngineError::Config(format!("crowd task ended abnormally: {join}")))??;
    schedule_auto_close(&state, id);
    let summary = state.with_engine(|e| e.cycle(id).map(CycleSummary::from))?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn ws_upgrade(State(state): State<SharedState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| feed(socket, state))
}

/// Sends the current state of every cycle, then one notice per event.
async fn feed(mut socket: WebSocket, state: SharedState) {
    let (mut rx, hello) = state.with_engine(|e| {
        // subscribe under the lock so no event falls between hello and feed
        let rx = state.subscribe();
        let hello: Vec<CycleSummary> = e.state().cycles.iter().map(CycleSummary::from).collect();
        (
            rx,
            serde_json::json!({ "kind": "Hello", "last_seq": e.state().last_seq, "cycles": hello }),
        )
    });
    if socket.send(Message::Text(hello.to_string().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            notice = rx.recv() => match notice {
                Ok(notice) => {
                    let Ok(text) = serde_json::to_string(&notice) else { continue };
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(missed)) => {
                    let text = serde_json::json!({ "kind": "Lagged", "missed": missed }).to_string();
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Builds the shared state for `config`, replaying the configured log when it
/// already holds records and appending to it from then on.
pub fn build_state(config: &crate::config::EngineConfig) -> Result<SharedState, EngineError> {
    config.validate()?;
    let options = config.engine_options();
    let mut engine = match &config.log_path {
        Some(path) if path.exists() => {
            let records = crate::log::read_log_file(path)?;
            tracing::info!(path = %path.display(), records = records.len(), "replaying event log");
            Engine::replay(options, records)?
        }
        _ => Engine::new(options),
    };
    if let Some(path) = &config.log_path {
        engine = engine.with_sink(crate::log::FileSink::open(path)?);
    }
    let auto_close = config.auto_close_secs.map(Duration::from_secs_f64);
    Ok(AppState::new(engine, auto_close))
}

/// Serves until Ctrl-C.
pub async fn serve(config: crate::config::EngineConfig) -> Result<(), EngineError> {
    let state = build_state(&config)?;
    let resumed = resume_pending(&state).len();
    if resumed > 0 {
        tracing::info!(resumed, "restarted interrupted inference");
    }
    let listener = tokio::net::TcpListener::bind((config.bind.as_str(), config.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, method = %config.method, "engine listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
