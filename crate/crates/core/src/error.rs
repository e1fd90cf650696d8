use alloc::string::String;

use crate::raster::ClassId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: i64, height: i64 },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("buffer holds {got} values, expected {expected}")]
    BufferLength { expected: usize, got: usize },

    #[error("value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },

    #[error("class mismatch: {0} vs {1}")]
    ClassMismatch(ClassId, ClassId),

    #[error("class index {0} cannot label a foreground class")]
    InvalidClass(u8),

    #[error("empty input")]
    EmptyInput,

    #[error("expected {expected} items, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{name} = {value} is out of range")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("bad .flo magic {0}, not a flow file")]
    MagicMismatch(f32),

    #[error("truncated flow file: need {expected} bytes, have {got}")]
    TruncatedFile { expected: usize, got: usize },

    #[error("flow file has {0} trailing bytes")]
    TrailingBytes(usize),

    #[error("non-finite flow value at pixel {0}")]
    NonFiniteFlow(usize),

    #[error("prediction contains the ignore label at pixel {0}")]
    IgnoreInPrediction(usize),

    #[error("label {label} at pixel {index} exceeds the {n_classes}-class matrix")]
    LabelOutOfRange { index: usize, label: u8, n_classes: usize },

    #[error("confusion matrix has no evaluated pixels")]
    EmptyMatrix,

    #[error("priority-by-score conflict resolution needs a score for class {0}")]
    MissingScores(ClassId),

    #[error("invalid scene: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = core::result::Result<T, Error>;
