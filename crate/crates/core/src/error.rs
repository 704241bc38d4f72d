use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Value(String),

    #[error("id out of bounds: {kind} id {id} not below {bound}")]
    IdOutOfBounds {
        kind: &'static str,
        id: usize,
        bound: usize,
    },

    #[error("model file format error: {0}")]
    ModelFormat(String),

    #[error("operation requires model kind {expected}, got {actual}")]
    WrongModelKind { expected: String, actual: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not normal: commutator residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotNormal { residual: f64, tol: f64 },

    #[error("numerical rank {observed} exceeds requested bound {requested}")]
    RankExceeded { observed: usize, requested: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("unknown {kind} name: {name}")]
    UnknownName { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, KgError>;
