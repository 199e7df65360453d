use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("solver blew up at t = {time:.6e} s (worst node {node}, |v| = {speed:.3e} mm/s)")]
    Blowup { time: f64, node: usize, speed: f64 },

    #[error("relaxation did not converge within {steps} steps (last KE/SE = {last_ratio:.3e})")]
    Timeout {
        steps: usize,
        last_ratio: f64,
        trace: Vec<(f64, f64, f64)>,
    },

    #[error("crimp to {target:.3} mm is infeasible: {reason}")]
    InfeasibleCrimp { target: f64, reason: String },

    #[error("deployment failed: {0}")]
    Deployment(String),

    #[error("rigid-body drift during cyclic loading: {0}")]
    Drift(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
