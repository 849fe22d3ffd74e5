use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Usage,
    Validation,
    Runtime,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Usage => 1,
            Kind::Validation => 2,
            Kind::Runtime => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Validation, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Runtime, message: message.into() }
    }

    /// The single machine-readable line written to stderr on failure.
    pub fn json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: Kind,
            exit_code: u8,
            message: &'a str,
        }
        serde_json::to_string(&Line { error: self.kind, exit_code: self.kind.exit_code(), message: &self.message })
            .expect("error line serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<deconf::Error> for CliError {
    fn from(e: deconf::Error) -> Self {
        let kind = if e.is_validation() { Kind::Validation } else { Kind::Runtime };
        CliError { kind, message: e.to_string() }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                deconf::Error::from(e).into()
            }
        }
    )*};
}

via_core_error!(
    deconf::corpus::CorpusError,
    deconf::stats::StatsError,
    deconf::treeminer::MiningError,
    deconf::diffcore::DiffError,
    deconf::model::ModelError,
    deconf::attribution::AttributionError,
    deconf::evalmetrics::MetricsError
);

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Wraps an I/O failure on `path` as a runtime error.
pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}
