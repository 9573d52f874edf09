use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state and action spaces must be non-empty")]
    EmptySpace,

    #[error("state {state} out of range (n_states = {n_states})")]
    StateOutOfRange { state: usize, n_states: usize },

    #[error("action {action} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },

    #[error("invalid probability {p} for transition ({state}, {action}) -> {next}")]
    BadProbability {
        state: usize,
        action: usize,
        next: usize,
        p: f64,
    },

    #[error("transition row ({state}, {action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },

    #[error("no transitions listed for non-terminal pair ({state}, {action})")]
    MissingRow { state: usize, action: usize },

    #[error("terminal state {0} is not an absorbing zero-reward self-loop")]
    NotAbsorbing(usize),

    #[error("discount factor {0} outside [0, 1)")]
    Discount(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("sampling distribution must be strictly positive and sum to one: {0}")]
    Distribution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("malformed MDP file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
