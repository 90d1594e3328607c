use std::io;

use thiserror::Error;

/// Errors produced anywhere in the imaging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("stream length error: {0}")]
    Length(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate component {component}: all weights vanish after cropping")]
    DegenerateComponent { component: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("signal-to-noise ratio is infinite for a noiseless (G = inf) measurement")]
    InfiniteSnr,

    #[error("squeezing parameter is unrepresentable for infinite gain")]
    Unrepresentable,

    #[error("class error: {0}")]
    Class(String),

    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum {
        path: String,
        expected: String,
        found: String,
    },

    #[error("axis error: {0}")]
    Axis(String),

    #[error("spec error at line {line}: {message}")]
    Spec { line: usize, message: String },

    #[error("cell (k={k}, m={m}, G={gain}, seed={seed}): {source}")]
    Cell {
        k: usize,
        m: String,
        gain: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
