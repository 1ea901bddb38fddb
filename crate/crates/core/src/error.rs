use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid hierarchy for attribute `{attribute}`: {}", join(.issues))]
    Hierarchy {
        attribute: String,
        issues: Vec<crate::schema::HierarchyIssue>,
    },

    #[error("row {row}: value `{value}` is outside the domain of attribute `{attribute}`")]
    Domain {
        row: usize,
        attribute: String,
        value: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid query: {0}")]
    Query(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown mechanism `{0}`")]
    UnknownMechanism(String),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
