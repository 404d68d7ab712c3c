use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("order {0} is not a positive multiple of 4")]
    InvalidOrder(usize),
    #[error("segment {segment} has length {len}, expected {expected}")]
    SegmentLength { segment: usize, len: usize, expected: usize },
    #[error("entry {value} at ({row}, {col}) is not +1 or -1")]
    InvalidEntry { row: usize, col: usize, value: i64 },
    #[error("matrix is not square: {rows} rows, row {bad_row} has {len} entries")]
    NotSquare { rows: usize, bad_row: usize, len: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("power spectrum entry P[{index}] = {value} is negative or not finite")]
    Domain { index: usize, value: f64 },
    #[error("unit {unit} is not invertible modulo {modulus}")]
    NotAUnit { unit: usize, modulus: usize },
    #[error("segment_sums: {sums:?} is not a valid decomposition of n = {n}; valid choices: {valid}")]
    InfeasibleSegmentSums { n: usize, sums: [u32; 4], valid: String },
    #[error("unsupported size: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {field}: {msg}")]
    Config { field: &'static str, msg: String },
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("input of {len} tokens exceeds context length {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("token {token} out of vocabulary of size {vocab}")]
    BadToken { token: usize, vocab: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is incompatible with supported version {expected}")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(std::io::Error::other(e))
    }
}
