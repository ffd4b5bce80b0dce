//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A row of an embedding batch has (near-)zero norm. The loss is
    /// undefined on zero vectors; a zero projector output signals a
    /// training bug, so this is loud rather than clamped.
    #[error("degenerate embedding: row {row} has norm {norm:e}, below eps {eps:e}")]
    DegenerateEmbedding { row: usize, norm: f64, eps: f64 },

    #[error("shard plan: {0}")]
    Shard(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("model state: {0}")]
    State(String),

    #[error("config: {0}")]
    Config(String),

    /// Training produced a non-finite loss. Carries enough context to
    /// diagnose where the run blew up.
    #[error(
        "numerical divergence at epoch {epoch}, batch {batch}: non-finite loss \
         (bias {bias}, temperature {temperature})"
    )]
    Divergence {
        epoch: usize,
        batch: usize,
        bias: f64,
        temperature: f64,
    },

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGrad(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 config/usage, 2 check failure
    /// (mapped elsewhere), 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NonFiniteGrad(_) => 3,
            _ => 1,
        }
    }
}
