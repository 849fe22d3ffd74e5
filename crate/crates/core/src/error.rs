use thiserror::Error;

use crate::attribution::AttributionError;
use crate::corpus::CorpusError;
use crate::diffcore::DiffError;
use crate::evalmetrics::MetricsError;
use crate::model::ModelError;
use crate::stats::StatsError;
use crate::treeminer::MiningError;

/// Crate-wide error, wrapping the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl Error {
    /// True when the error stems from invalid input rather than a failure
    /// while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Corpus(_) | Error::Stats(_) | Error::Metrics(_) => true,
            Error::Mining(e) => !matches!(e, MiningError::Io { .. }),
            Error::Model(e) => e.is_validation(),
            Error::Diff(_) | Error::Attribution(_) => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
