use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error(
        "cell resolution {resolution} does not place the membrane on grid lines for margin {margin} \
         (smallest valid resolution is {smallest}, next valid above the request is {next})"
    )]
    MisalignedResolution {
        margin: f64,
        resolution: usize,
        smallest: usize,
        next: usize,
    },

    #[error(
        "problem too large: {unknowns} unknowns need about {estimated_mb:.1} MB, budget is {budget_mb:.1} MB"
    )]
    BudgetExceeded {
        unknowns: usize,
        estimated_mb: f64,
        budget_mb: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("nonlinearity rejected: {0}")]
    Nonlinearity(String),

    #[error("no feasible growth constants: {0}")]
    GrowthConstants(String),

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("linear solver did not converge (residual history {history:?})")]
    LinearSolve { history: Vec<f64> },

    #[error("Newton iteration failed at t = {t} (residual history {history:?})")]
    Newton { t: f64, history: Vec<f64> },

    #[error("periodic iteration did not reach tolerance after {iterations} iterations (defects {defects:?})")]
    PeriodicNotConverged { iterations: usize, defects: Vec<f64> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
