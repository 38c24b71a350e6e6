use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("marginal mismatch: {0}")]
    MarginalMismatch(String),

    #[error("cost index out of range: ({i}, {j}) for {rows}x{cols} matrix")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },

    #[error("tangent frame required but not available: {0}")]
    MissingFrame(String),

    #[error("enumeration budget exceeded ({0} states visited)")]
    BudgetExceeded(u64),

    #[error("limb structure violation: {reason}; witness pairs {witness:?}")]
    Structure {
        reason: String,
        witness: Vec<(usize, usize)>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("chain is not cyclic: {0}")]
    NotCyclic(String),

    #[error("exact arithmetic range exceeded: {0}")]
    ArithmeticRange(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
