use crate::params::Violation;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {}", format_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains a non-finite value ({0})")]
    NonFiniteField(&'static str),

    #[error("energy became non-finite and could not be recovered")]
    NonFiniteEnergy,

    #[error("infeasible construction plan: {0}")]
    BadPlan(String),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
