use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A block subproblem has an empty feasible set at the current iterate.
    #[error("infeasible block `{block}`: {reason}")]
    InfeasibleBlock { block: &'static str, reason: String },

    /// A multiplier search or iterative kernel failed to converge.
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    /// No feasible starting point could be built for a scenario.
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    /// The power budget cannot cover the radar share and element overheads.
    #[error("infeasible power budget: {0}")]
    InfeasibleBudget(String),

    /// Malformed request, such as an unknown experiment kind.
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            detail: detail.into(),
        }
    }

    pub(crate) fn infeasible_block(block: &'static str, reason: impl Into<String>) -> Self {
        Error::InfeasibleBlock {
            block,
            reason: reason.into(),
        }
    }
}
