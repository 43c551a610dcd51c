use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not place {what}: grid has {free} free cells, {needed} required")]
    Placement {
        what: &'static str,
        free: usize,
        needed: usize,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("encoded state length drifted: expected {expected}, got {got}")]
    LengthDrift { expected: usize, got: usize },

    #[error("rules line {line}: {msg}")]
    RuleParse { line: usize, msg: String },

    #[error("parameter file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            context,
            expected,
            got,
        }
    }
}
