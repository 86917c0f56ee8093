use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state space: {0}")]
    Space(String),
    #[error("invalid density: {0}")]
    Density(String),
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("kernel is not reversible (defect {defect:.3e} exceeds {tolerance:.3e})")]
    NotReversible { defect: f64, tolerance: f64 },
    #[error("translation-invariant weights are not symmetric at displacement {0:?}")]
    AsymmetricWeights(Vec<i64>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("momentum field does not match the edge support: {0}")]
    SupportMismatch(String),
    #[error("operation requires a periodic lattice")]
    NotLattice,
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("negative mass {value:.3e} at state {index} after evolution")]
    Negativity { index: usize, value: f64 },
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
