use std::path::PathBuf;

use crate::oracle::QueryLedger;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point id {id} out of range for {n} points")]
    OutOfRange { id: usize, n: usize },
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate metric: all points identical")]
    DegenerateMetric,
    #[error("strong-query budget of {budget} exceeded before the run could start")]
    BudgetExceeded { budget: u64, ledger: QueryLedger },
    #[error("no feasible radius on the search grid")]
    NoFeasibleRadius,
    #[error("exhaustive search too large: C({n},{k}) subsets exceeds the enumeration guard")]
    EnumerationGuard { n: usize, k: usize },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "usage",
            Error::InvalidData(_) => "invalid-data",
            Error::Config(_) => "config",
            Error::Precondition(_) => "precondition",
            Error::DegenerateMetric => "degenerate-metric",
            Error::BudgetExceeded { .. } => "budget-exceeded",
            Error::NoFeasibleRadius => "no-feasible-radius",
            Error::EnumerationGuard { .. } => "enumeration-guard",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
