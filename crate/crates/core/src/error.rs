use thiserror::Error;

/// Errors produced by model construction, inference and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("exact inference refused: p = {p} exceeds the enumeration limit {max_p}")]
    TooLarge { p: usize, max_p: usize },

    #[error("infeasible graph specification: {0}")]
    InfeasibleGraph(String),

    #[error("invalid cycle: {0}")]
    InvalidCycle(String),

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("cut multipliers diverge: no fitted means within the penalty box satisfy the cut pool")]
    DivergentMultipliers,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::TooLarge { .. }
                | Error::InfeasibleGraph(_)
                | Error::DivergentMultipliers
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
