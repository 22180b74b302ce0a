use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("layer chaining error: layer {index} outputs {out} but next layer expects {expected}")]
    LayerChain {
        index: usize,
        out: usize,
        expected: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("latent coordinate out of range: z[{dim}] = {value}")]
    LatentOutOfRange { dim: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("non-finite {component} at iteration {iteration}")]
    NonFinite {
        component: String,
        iteration: usize,
    },

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
