use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single violated constraint of a candidate solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// No facility is open.
    NoFacilityOpen,
    /// Customer is assigned to a facility that is closed (Y <= X).
    AssignedToClosed { customer: usize, facility: usize },
    /// Customer is assigned to a facility index that does not exist.
    FacilityOutOfRange { customer: usize, facility: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoFacilityOpen => write!(f, "no facility open"),
            Violation::AssignedToClosed { customer, facility } => {
                write!(f, "Y <= X at customer {customer} (facility {facility} closed)")
            }
            Violation::FacilityOutOfRange { customer, facility } => {
                write!(f, "customer {customer} assigned to unknown facility {facility}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("infeasible solution: {}", format_violations(.0))]
    Infeasible(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("instance too large for exhaustive enumeration: m = {m} exceeds {limit}")]
    SizeGuard { m: usize, limit: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error in field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
