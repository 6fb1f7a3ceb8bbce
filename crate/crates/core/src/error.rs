use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used to pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Input,
    Domain,
    Invariant,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Input => 2,
            ErrorKind::Domain => 3,
            ErrorKind::Invariant => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("xml parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("way {way_id} references missing node {node_id}")]
    MissingNode { way_id: i64, node_id: i64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("{0}")]
    Domain(String),

    #[error("sensor {sensor_id} is {distance_m:.1} m from the nearest road (snap threshold {threshold_m} m)")]
    Snap {
        sensor_id: String,
        distance_m: f64,
        threshold_m: f64,
    },

    #[error("no data for {date}: {reason}")]
    Unavailable { date: chrono::NaiveDate, reason: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Xml { .. }
            | Error::MissingNode { .. }
            | Error::Argument(_)
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Input,
            Error::Domain(_) | Error::Snap { .. } | Error::Unavailable { .. } => ErrorKind::Domain,
            Error::Invariant(_) => ErrorKind::Invariant,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
