use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("attempted to update a frozen model")]
    FrozenModel,
    #[error("rejector must have 2 outputs, found {0}")]
    RejectorOutputs(usize),
    #[error("stochastic client given to a closed form that needs a deterministic client; use posterior_enumeration")]
    StochasticClient,
    #[error("invalid cost parameters: {0}")]
    InvalidCosts(&'static str),
    #[error("invalid probability: {0}")]
    InvalidProbability(&'static str),
}
