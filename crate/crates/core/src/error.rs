use thiserror::Error;

/// Errors raised by the analytical engine, optimizer and simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("attribute {attribute} has {observers} observers, enumeration cap is {cap}")]
    EnumerationTooLarge {
        attribute: usize,
        observers: usize,
        cap: usize,
    },

    #[error("infeasible error-probability target: {0}")]
    InfeasibleTarget(String),

    #[error("large-state split is degenerate for isa {isa}, attribute {attribute}")]
    DegenerateSplit { isa: usize, attribute: usize },

    #[error("grid of {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("no feasible point: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
