use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("invalid cell geometry: {0}")]
    Geometry(String),

    #[error("point outside domain: {0}")]
    Domain(String),

    #[error("root bracket [{lo:e}, {hi:e}] not resolved after {iterations} iterations")]
    RootFinding { lo: f64, hi: f64, iterations: usize },

    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol:e} within {levels} levels")]
    Quadrature { a: f64, b: f64, tol: f64, levels: u32 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
