use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or mismatched shapes/structures.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called with arguments that make the request meaningless.
    #[error("usage error: {0}")]
    Usage(String),

    /// A computation produced a non-finite value.
    #[error("numerical error{}: {message}", round.map(|r| format!(" in round {r}")).unwrap_or_default())]
    Numerical {
        round: Option<usize>,
        message: String,
    },

    /// Malformed input file.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    /// LEGATO needs at least two logged rounds to compute robustness factors.
    #[error("insufficient history: {have} logged round(s), need at least {need}")]
    InsufficientHistory { have: usize, need: usize },

    /// The engine reached a state its own bookkeeping should have ruled out.
    #[error("engine invariant violated: {0}")]
    Invariant(String),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            round: None,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a round index, filling it in directly for numerical errors.
    pub fn at_round(self, round: usize) -> Self {
        match self {
            Error::Numerical { round: None, message } => Error::Numerical {
                round: Some(round),
                message,
            },
            e @ (Error::Numerical { .. } | Error::AtRound { .. }) => e,
            other => Error::AtRound {
                round,
                source: Box::new(other),
            },
        }
    }

    /// Short machine-readable category name, used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Numerical { .. } => "numerical",
            Error::Format { .. } => "format",
            Error::InsufficientHistory { .. } => "insufficient_history",
            Error::Invariant(_) => "invariant",
            Error::AtRound { source, .. } => source.kind(),
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
