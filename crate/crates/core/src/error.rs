use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("non-positive extent at byte {pos}")]
    NonPositiveExtent { pos: usize },

    #[error("invalid blocking string: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidBlocking(Vec<Violation>),

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("invalid memory hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("invalid energy table: {0}")]
    InvalidEnergyTable(String),

    #[error("unschedulable: {0}")]
    Unschedulable(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("buffer list does not match the blocking string: {0}")]
    Mismatch(String),

    #[error("simulation cap exceeded: {macs} MACs > cap {cap}")]
    CapExceeded { macs: u64, cap: u64 },

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("partition rejected: {0}")]
    Partition(String),

    #[error("unknown benchmark layer `{0}`")]
    UnknownLayer(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Infeasibility-class errors map to a distinct process exit code in the CLI.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Unschedulable(_) | Error::Infeasible(_) | Error::BudgetExceeded(_)
        )
    }
}
