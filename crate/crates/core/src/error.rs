use std::io;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to normalize")]
    ZeroVector { norm: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
    #[error("invalid projection dimension {dims} (allowed 1..={max})")]
    BadDims { dims: usize, max: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("centroids of classes {a} and {b} are {distance:e} apart (floor {floor:e})")]
    CollapsedCentroids {
        a: usize,
        b: usize,
        distance: f64,
        floor: f64,
    },
    #[error("class map points at source class {0}, which has no perturbations")]
    EmptySourceClass(usize),
    #[error("class {class} has {size} member(s); at least {needed} required")]
    ClassTooSmall {
        class: usize,
        size: usize,
        needed: usize,
    },
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("bad assignment: {0}")]
    BadAssignment(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_mismatch(expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        expected: expected.into(),
        got: got.into(),
    }
}
