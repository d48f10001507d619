use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A weight vector collapsed to zero norm (diverged or zero-initialised).
    #[error("degenerate state: {0}")]
    DegenerateState(&'static str),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory diverged at step {step}")]
    Divergence { step: u64 },

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("Hermite order {0} exceeds the supported maximum of 30")]
    OrderTooHigh(usize),

    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudget(String),

    /// A configuration problem attributed to one or more config keys.
    #[error("invalid config ({}): {message}", keys.join(", "))]
    InvalidConfig {
        keys: Vec<&'static str>,
        message: String,
    },

    #[error("seed {seed}: {source}")]
    InRun { seed: u64, source: Box<Error> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
