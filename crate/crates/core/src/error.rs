use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes. The CLI maps each one onto a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    DataFormat,
    ShapeConfig,
    Numerical,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Io => "io",
            ErrorCategory::DataFormat => "data-format",
            ErrorCategory::ShapeConfig => "shape-config",
            ErrorCategory::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed input ({context}): {message}")]
    DataFormat { context: String, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty flow has no feature matrix")]
    EmptyFlow,

    #[error("non-finite value {value} in {context}")]
    NonFinite { context: String, value: f64 },

    #[error("degenerate dividers: {0}")]
    DegenerateDividers(String),

    #[error("class {class} has {available} flows, {requested} labelled flows requested")]
    NotEnoughLabels {
        class: u32,
        available: usize,
        requested: usize,
    },

    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::DataFormat {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::DataFormat { .. } | Error::EmptyFlow => ErrorCategory::DataFormat,
            Error::Shape(_)
            | Error::Config(_)
            | Error::DegenerateDividers(_)
            | Error::NotEnoughLabels { .. }
            | Error::TargetOutOfRange { .. } => ErrorCategory::ShapeConfig,
            Error::NonFinite { .. } | Error::Diverged { .. } | Error::NonFiniteGradient { .. } => {
                ErrorCategory::Numerical
            }
        }
    }
}
