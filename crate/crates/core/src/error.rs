use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GapoError {
    #[error("empty group")]
    EmptyGroup,

    #[error("invalid reward at index {index}: {value}")]
    InvalidReward { index: usize, value: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("policy/task mismatch: {0}")]
    PolicyTaskMismatch(String),
}

pub type Result<T> = std::result::Result<T, GapoError>;
