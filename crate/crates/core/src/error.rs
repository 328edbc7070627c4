use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot fit a tree on an empty subsample")]
    EmptySubsample,

    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("score vector is empty")]
    EmptyVector,

    #[error("entry {index} is negative or NaN ({value})")]
    NegativeEntry { index: usize, value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("not a probability vector (sum = {sum})")]
    NotAProbability { sum: f64 },

    #[error("alpha must be a non-negative number or `inf`, got {0}")]
    InvalidAlpha(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no threshold available: configure either tau or contamination")]
    NoThreshold,

    #[error("labels must contain at least one positive and one negative")]
    DegenerateLabels,

    #[error("no results to rank")]
    EmptyResults,

    #[error("row {row}, column {col}: cannot parse {text:?} as a number")]
    Parse { row: usize, col: usize, text: String },

    #[error("row {row}, column {col}: non-finite value")]
    NonFiniteValue { row: usize, col: usize },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },

    #[error("row {row}: label {value} is not 0 or 1")]
    LabelNotBinary { row: usize, value: f64 },

    #[error("model file version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u64, supported: u64 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
