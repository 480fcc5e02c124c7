use thiserror::Error;

/// Errors produced by parsing, simulation and measurement.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("amplitude expression error at position {pos}: {msg}")]
    Amplitude { pos: usize, msg: String },

    #[error("undeclared {kind} `{token}` at line {line}")]
    Undeclared {
        kind: &'static str,
        token: String,
        line: usize,
    },

    #[error("duplicate rule target at line {line}: {target}")]
    DuplicateRule { target: String, line: usize },

    #[error("machine error: {0}")]
    Machine(String),

    #[error("superposition already consumed by a terminal measurement")]
    Consumed,

    #[error("conditioning on zero-probability symbol `{symbol}` at cell {cell}")]
    ZeroProbability { symbol: String, cell: i64 },

    #[error("cell {cell} is not a qubit cell: symbol `{symbol}` carries probability {prob:.6}")]
    NotAQubit {
        cell: i64,
        symbol: String,
        prob: f64,
    },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("isometry window radius {radius} is smaller than the step count {steps}")]
    WindowTooSmall { radius: i64, steps: u32 },

    #[error("instance error: {0}")]
    Instance(String),

    #[error("transform error: {0}")]
    Transform(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
