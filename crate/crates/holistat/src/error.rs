use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a precondition (bad bin width, out-of-range value, ...).
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// The input is structurally fine but statistically unusable
    /// (constant series, zero percentile, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An operation would have produced or consumed an empty series.
    #[error("empty series: {0}")]
    EmptySeries(String),

    /// Tensor/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A generator spec that cannot be realized (negative rate, bad mixture, ...).
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    /// A record references a node that is not in the inventory.
    #[error("unknown node: {0}")]
    UnknownNode(String),

    /// An encoded buffer failed to decode.
    #[error("corrupt buffer: {0}")]
    CorruptBuffer(String),
}

pub type Result<T> = std::result::Result<T, Error>;
