use thiserror::Error;

/// Errors raised by models, solvers, learners and environments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("impossible observation {observation} after action {action} (likelihood is zero)")]
    ImpossibleObservation { action: usize, observation: usize },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("horizon exhausted after {horizon} steps")]
    HorizonExhausted { horizon: usize },

    #[error("model too large: {0}")]
    TooLarge(String),

    #[error("environment step {step} failed: {source}")]
    EnvStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error is a write to a closed pipe.
    pub fn is_broken_pipe(&self) -> bool {
        let io = match self {
            Error::Io(e) => Some(e),
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e),
                _ => None,
            },
            _ => None,
        };
        io.is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broken_pipe_is_recognized() {
        let pipe = || std::io::Error::from(std::io::ErrorKind::BrokenPipe);
        assert!(Error::Io(pipe()).is_broken_pipe());
        assert!(Error::Csv(csv::Error::from(pipe())).is_broken_pipe());
        assert!(!Error::Io(std::io::Error::from(std::io::ErrorKind::NotFound)).is_broken_pipe());
        assert!(!Error::Contract("x".into()).is_broken_pipe());
    }
}
