use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),
    #[error("invalid label {value} for {k} classes")]
    InvalidLabel { value: usize, k: usize },
    #[error("noise parameter {omega} outside [0, (K-1)/K) for K={k}")]
    OmegaOutOfBound { omega: f64, k: usize },
    #[error("unknown support point `{0}` for tabular noise model")]
    UnknownSupportPoint(String),
    #[error("step {0} does not divide 1 within tolerance")]
    BadGridStep(f64),
    #[error("infeasible noisy conditional: entry {entry} below omega/(K-1) = {floor}")]
    InfeasibleNoisyConditional { entry: f64, floor: f64 },
    #[error("invalid discrete problem: {0}")]
    InvalidProblem(String),
    #[error("unsupported loss/configuration: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("IDX parse error: {0}")]
    Idx(#[from] IdxError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Errors raised by the IDX binary reader, one per failure mode.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
