use std::fmt;
use std::process::ExitCode;

use marginflat::Error;

/// Why a subcommand stopped; each variant maps to one exit code.
#[derive(Debug)]
pub enum Failure {
    /// A metric gate failed (exit 1).
    Gate(String),
    /// Invalid configuration or input files (exit 2).
    Config(String),
    /// Non-finite values during training or evaluation (exit 3).
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Gate(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Gate(msg) => write!(f, "gate failed: {msg}"),
            Failure::Config(msg) => write!(f, "configuration error: {msg}"),
            Failure::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteNode { .. }
            | Error::NonFiniteGradient { .. }
            | Error::Divergence { .. } => Failure::Numerical(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}
