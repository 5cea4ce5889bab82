use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "event {index} indexes participant {participant}, response {response} \
         outside a {n_participants}x{n_responses} model"
    )]
    DimensionMismatch {
        index: usize,
        participant: usize,
        response: usize,
        n_participants: usize,
        n_responses: usize,
    },

    #[error("state is {got_rows}x{got_cols} but data needs {want_rows}x{want_cols}")]
    ShapeMismatch {
        got_rows: usize,
        got_cols: usize,
        want_rows: usize,
        want_cols: usize,
    },

    #[error("event {index}: pair choice with winner == loser ({response})")]
    DegeneratePair { index: usize, response: usize },

    #[error("singular value decomposition did not converge")]
    SvdNonConvergence,

    #[error("dataset has no events")]
    EmptyDataset,

    #[error("gradient became non-finite at step {step}")]
    NonFiniteGradient { step: usize },

    #[error("initial state is outside the nuclear-norm ball (norm {norm}, radius {tau})")]
    InfeasibleInit { norm: f64, tau: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("holdout event {index} is a pair choice; only agreement events can be scored")]
    PairChoiceInHoldout { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("rank {rank} exceeds min(n, m) = {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("assignment {index} is invalid: {reason}")]
    InvalidAssignment { index: usize, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
