//! The validated corpus store written by `ingest`.

use std::collections::HashMap;
use std::path::Path;

use deconf::corpus::{parse_corpus, ArticleRegistry, Corpus};
use serde::{Deserialize, Serialize};

use crate::config::SplitName;
use crate::error::{CliError, Result};
use crate::manifest::Stage;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const ARTICLES_FILE: &str = "articles.txt";
pub const SPLITS_FILE: &str = "splits.json";

/// Split membership by document id, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl SplitIds {
    pub fn get(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }
}

pub struct Store {
    pub stage: Stage,
    pub corpus: Corpus,
    pub splits: SplitIds,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self> {
        let stage = Stage::open(dir, &["ingest"])?;
        let ids = stage.read_string(ARTICLES_FILE)?.lines().map(String::from).collect();
        let registry = ArticleRegistry::new(ids)?;
        let corpus = parse_corpus(&stage.read_string(CORPUS_FILE)?, &registry)?;
        if stage.manifest.corpus_hash.as_deref() != Some(corpus.content_hash().as_str()) {
            return Err(CliError::validation(format!("{}: corpus hash does not match its manifest", dir.display())));
        }
        let splits: SplitIds = stage.read_json(SPLITS_FILE)?;
        let store = Store { stage, corpus, splits };
        for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
            store.indices(name)?;
        }
        Ok(store)
    }

    pub fn corpus_hash(&self) -> String {
        self.corpus.content_hash()
    }

    fn indices(&self, name: SplitName) -> Result<Vec<usize>> {
        let pos: HashMap<&str, usize> =
            self.corpus.docs.iter().enumerate().map(|(i, d)| (d.doc_id.as_str(), i)).collect();
        self.splits
            .get(name)
            .iter()
            .map(|id| {
                pos.get(id.as_str()).copied().ok_or_else(|| {
                    CliError::validation(format!("{}: split lists unknown document {id:?}", self.stage.dir.display()))
                })
            })
            .collect()
    }

    pub fn split(&self, name: SplitName) -> Result<Corpus> {
        Ok(self.corpus.subset(&self.indices(name)?))
    }
}
