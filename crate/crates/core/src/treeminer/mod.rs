//! Distractor-candidate mining with iterated depth-limited decision trees,
//! and the file-based expert review of the mined tokens.

mod mining;
mod review;
mod tree;

pub use mining::{mine_candidates, mine_task, Iteration, MineConfig, MiningRun};
pub use review::{
    export_review, import_review, parse_review, Category, LexiconEntry, Provenance, SpuriousLexicon,
    REVIEW_HEADER,
};
pub use tree::{train_tree, DecisionTree, FeatureMatrix, Split, TreeNode};

use std::path::PathBuf;

use thiserror::Error;

use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("tree training needs both classes; got only {0}")]
    SingleClass(&'static str),
    #[error("tree training needs at least 2 documents, got {0}")]
    TooFewDocuments(usize),
    #[error("feature matrix has {rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("no candidate tokens survive the LMI filter for view {0}")]
    EmptyCandidates(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Review { path: PathBuf, line: usize, message: String },
    #[error("nothing to export: the mining run extracted no tokens")]
    EmptyRun,
}
