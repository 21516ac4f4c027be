use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    InvalidMatrix,
    #[error("matrix is singular even after Tikhonov regularization")]
    SingularMatrix,
    #[error("augmented matrix is not positive definite (Schur complement {0:e})")]
    NotPositiveDefinite(f64),
    #[error("degenerate downdate pivot {0:e}")]
    DegenerateDowndate(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("rectangle ({x}, {y}, {w}, {h}) lies outside a {width}x{height} image")]
    BoundsError {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training collapsed at node {node}: no positive passes the node threshold")]
    TrainingCollapse { node: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::ConfigError(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
