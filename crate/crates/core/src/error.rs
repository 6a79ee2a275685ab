use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),
    #[error("markov chain is reducible: {0}")]
    Reducible(String),
    #[error("markov chain is periodic with period {0}")]
    Periodic(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid state {state} for a resource with {states} states")]
    InvalidState { state: usize, states: usize },
    #[error("congestion level {n} outside 1..={max}")]
    CongestionOutOfRange { n: usize, max: usize },
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("search space too large: {what} has {size} elements (limit {limit})")]
    SearchTooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },
    #[error("mean table has no entry for resource {resource}, congestion {n}")]
    MissingEntry { resource: usize, n: usize },
    #[error("exploration plan does not cover {0:?} (user, resource, congestion)")]
    Uncovered(Vec<(usize, usize, usize)>),
    #[error("inconsistent exploration plan: {0}")]
    InconsistentPlan(String),
    #[error("scheduler misuse: {0}")]
    Schedule(String),
    #[error("agents desynchronized at t={t}: {detail}")]
    Desync { t: u64, detail: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("ledger does not match trace: {0}")]
    LedgerMismatch(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
