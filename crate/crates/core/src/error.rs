use thiserror::Error;

/// Cell indices in error messages are 1-based, matching the CSV outputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation failed in cell ({i}, {j}): {what}")]
    Evaluation { i: usize, j: usize, what: String },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("non-finite value {value} in cell ({i}, {j})")]
    NonFinite { i: usize, j: usize, value: f64 },

    #[error("negative density {value:e} in cell ({i}, {j}) at step {step}")]
    NegativeDensity {
        i: usize,
        j: usize,
        value: f64,
        step: usize,
    },

    #[error("membrane quantity became negative ({value:e}) at step {step}")]
    NegativeMembrane { value: f64, step: usize },

    #[error("non-finite membrane quantity at step {step}")]
    NonFiniteMembrane { step: usize },

    #[error("moment ODE produced a negative zeroth moment ({value:e}) at t = {t}")]
    NegativeMoment { value: f64, t: f64 },

    #[error("unknown scenario `{name}`; valid ids: {valid}")]
    UnknownScenario { name: String, valid: String },

    #[error("config error{}: {message}", at_path(path))]
    Config { path: String, message: String },

    #[error(
        "fixed-point iteration did not converge after {iterations} iterations \
         (last step {last_step:e}, contraction estimate {contraction:.4})"
    )]
    NotConverged {
        iterations: usize,
        last_step: f64,
        contraction: f64,
    },

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_path(path: &str) -> String {
    if path.is_empty() {
        String::new()
    } else {
        format!(" at `{path}`")
    }
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical integration itself (negativity, NaN).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NegativeDensity { .. }
                | Error::NegativeMembrane { .. }
                | Error::NonFiniteMembrane { .. }
                | Error::NegativeMoment { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
