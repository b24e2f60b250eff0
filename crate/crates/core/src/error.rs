use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("need at least 2 values to normalize, got {0}")]
    TooFewValues(usize),
    #[error("scores of group `{group}` are all equal ({value}); min-max range is zero")]
    DegenerateRange { group: String, value: f64 },
    #[error("rater list is empty")]
    EmptyRaterList,
    #[error("record `{sample_id}`: {reason}")]
    InvalidRecord { sample_id: String, reason: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("test fraction {value} for source `{group}` is not in (0, 1)")]
    BadFraction { group: String, value: f64 },
    #[error("input is empty")]
    Empty,
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch { context: &'static str, expected: usize, found: usize },
    #[error("expected a {expected}-slot prompt, got {found} slots")]
    WrongPromptKind { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("annotation flag must be 0 or 1, got {0}")]
    BadFlag(u8),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("train-mode batch needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("no prediction for sample `{0}`")]
    MissingPrediction(String),
    #[error("cannot parse answer: {0}")]
    ParseAnswer(String),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
