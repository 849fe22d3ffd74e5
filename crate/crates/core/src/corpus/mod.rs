//! Labeled document corpora: ingestion, validation, preprocessing, splitting
//! and synthesis.
//!
//! A [`Corpus`] is immutable once built. Every document is tokenized on
//! construction with [`tokenize`]; paragraphs are split into sentences with a
//! period/semicolon heuristic ([`split_sentences`]).

mod binning;
mod sample;
mod synth;

pub use binning::{derive_length_bins, LengthBinning};
pub use sample::{stratified_sample, SampleReport, Shortfall, StrataKey};
pub use synth::{synthesize_corpus, SynthSpec};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_lines;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed document: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown article id {id:?}")]
    UnknownArticle { line: usize, id: String },
    #[error("line {line}: duplicate doc_id {doc_id:?}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("line {line}: unknown doc_id {doc_id:?} in rationale overlay")]
    UnknownDocId { line: usize, doc_id: String },
    #[error("article registry must hold exactly 10 distinct ids, got {0}")]
    Registry(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Invalid(String),
}

/// Article ids known to the corpus. Label sets are stored as indices into it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRegistry {
    ids: Vec<String>,
}

pub const N_ARTICLES: usize = 10;

impl Default for ArticleRegistry {
    /// The ten convention articles most frequently litigated before the court.
    fn default() -> Self {
        let ids = ["2", "3", "5", "6", "8", "9", "10", "11", "14", "P1-1"];
        ArticleRegistry { ids: ids.iter().map(|s| s.to_string()).collect() }
    }
}

impl ArticleRegistry {
    pub fn new(ids: Vec<String>) -> Result<Self, CorpusError> {
        let distinct: HashSet<&String> = ids.iter().collect();
        if ids.len() != N_ARTICLES || distinct.len() != ids.len() {
            return Err(CorpusError::Registry(format!("{ids:?}")));
        }
        if ids.iter().any(|s| s.trim().is_empty()) {
            return Err(CorpusError::Registry("empty id".into()));
        }
        Ok(ArticleRegistry { ids })
    }

    /// Reads one id per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)
            .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        let ids = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        Self::new(ids)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|a| a == id)
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paragraph {
    pub index: usize,
    pub raw_text: String,
    /// Tokenized sentences; never contains an empty sentence.
    pub sentences: Vec<Vec<String>>,
}

impl Paragraph {
    pub fn new(index: usize, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let sentences = split_sentences(&raw_text);
        Paragraph { index, raw_text, sentences }
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }
}

/// Per-task targets. Article sets hold registry indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskLabels {
    pub j: Option<bool>,
    pub alleged: BTreeSet<usize>,
    pub violated: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub paragraphs: Vec<Paragraph>,
    /// Respondent-state code.
    pub state: String,
    pub n_sentences: usize,
    pub labels: TaskLabels,
    pub gold_rationale: Option<BTreeSet<usize>>,
}

impl Document {
    /// Builds a document from raw paragraph texts, tokenizing each one.
    pub fn new(
        doc_id: impl Into<String>,
        paragraphs: Vec<String>,
        state: impl Into<String>,
        labels: TaskLabels,
        gold_rationale: Option<BTreeSet<usize>>,
    ) -> Self {
        let paragraphs: Vec<Paragraph> =
            paragraphs.into_iter().enumerate().map(|(i, t)| Paragraph::new(i, t)).collect();
        let n_sentences = paragraphs.iter().map(|p| p.sentences.len()).sum();
        Document {
            doc_id: doc_id.into(),
            paragraphs,
            state: state.into(),
            n_sentences,
            labels,
            gold_rationale,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.paragraphs.iter().map(Paragraph::n_tokens).sum()
    }

    /// All tokens in reading order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.paragraphs.iter().flat_map(Paragraph::tokens)
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.tokens().any(|t| t == token)
    }

    /// Copy with `token` inserted at the start of paragraph `paragraph`,
    /// after its running number if it has one. Out-of-range indices leave
    /// the document unchanged.
    pub fn with_token_injected(&self, token: &str, paragraph: usize) -> Document {
        let mut doc = self.clone();
        if let Some(p) = doc.paragraphs.get_mut(paragraph) {
            let rest = strip_marker(&p.raw_text);
            let marker = &p.raw_text[..p.raw_text.len() - rest.len()];
            *p = Paragraph::new(p.index, format!("{marker}{token} {rest}"));
            doc.n_sentences = doc.paragraphs.iter().map(|p| p.sentences.len()).sum();
        }
        doc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub registry: ArticleRegistry,
}

// ---------------------------------------------------------------------------
// Tokenization

/// Lowercases, splits on whitespace and trims non-alphanumeric characters from
/// both ends of every token. Empty results are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.;!?](?:\s+|$)").unwrap());
static PARAGRAPH_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\d+\s*[.)](?:\s+|$)").unwrap());

/// Splits a paragraph into tokenized sentences at `.`, `;`, `!` or `?`
/// followed by whitespace. A fragment made only of digits (a running
/// paragraph number such as `12.`) is merged into the following sentence so
/// that sentence counts do not depend on paragraph numbering.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut carry: Vec<String> = Vec::new();
    for piece in SENTENCE_END.split(text) {
        let toks = tokenize(piece);
        if toks.is_empty() {
            continue;
        }
        if toks.len() == 1 && toks[0].chars().all(|c| c.is_ascii_digit()) {
            carry.extend(toks);
            continue;
        }
        let mut sentence = std::mem::take(&mut carry);
        sentence.extend(toks);
        out.push(sentence);
    }
    if !carry.is_empty() {
        out.push(carry);
    }
    out
}

/// Removes leading enumeration markers (`12.`, `3)`, optionally padded with
/// whitespace) from a paragraph text. Repeated markers are all removed, which
/// makes the operation idempotent.
pub fn strip_marker(text: &str) -> &str {
    let mut rest = text;
    while let Some(m) = PARAGRAPH_MARKER.find(rest) {
        rest = &rest[m.end()..];
    }
    rest
}

/// Returns a copy of `doc` whose paragraphs have their running numbers
/// removed and are re-tokenized.
pub fn strip_paragraph_numbers(doc: &Document) -> Document {
    let paragraphs: Vec<Paragraph> = doc
        .paragraphs
        .iter()
        .map(|p| Paragraph::new(p.index, strip_marker(&p.raw_text)))
        .collect();
    let n_sentences = paragraphs.iter().map(|p| p.sentences.len()).sum();
    Document { paragraphs, n_sentences, ..doc.clone() }
}

impl Corpus {
    pub fn new(docs: Vec<Document>, registry: ArticleRegistry) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, d) in docs.iter().enumerate() {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId { line: i + 1, doc_id: d.doc_id.clone() });
            }
        }
        Ok(Corpus { docs, registry })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn strip_paragraph_numbers(&self) -> Corpus {
        Corpus {
            docs: self.docs.iter().map(strip_paragraph_numbers).collect(),
            registry: self.registry.clone(),
        }
    }

    pub fn find(&self, doc_id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }

    /// Sub-corpus made of the documents at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
            registry: self.registry.clone(),
        }
    }

    /// One JSON object per document, in corpus order.
    pub fn to_jsonl_lines(&self) -> Vec<String> {
        self.docs
            .iter()
            .map(|d| serde_json::to_string(&RawDocument::from_document(d, &self.registry)).unwrap())
            .collect()
    }

    pub fn content_hash(&self) -> String {
        let lines = self.to_jsonl_lines();
        sha256_lines(lines.iter().map(String::as_str))
    }

    pub fn export(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |source| CorpusError::Io { path: path.to_path_buf(), source };
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        for line in self.to_jsonl_lines() {
            writeln!(f, "{line}").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    /// Replaces gold rationales from an overlay file of
    /// `{"doc_id": .., "gold_paragraphs": [..]}` lines.
    pub fn apply_rationale_overlay(&mut self, path: &Path) -> Result<usize, CorpusError> {
        let file = fs::File::open(path)
            .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        let index: BTreeMap<String, usize> =
            self.docs.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
        let mut applied = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RationaleOverlay = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
            let &i = index.get(&rec.doc_id).ok_or_else(|| CorpusError::UnknownDocId {
                line: line_no,
                doc_id: rec.doc_id.clone(),
            })?;
            let doc = &mut self.docs[i];
            let gold: BTreeSet<usize> = rec.gold_paragraphs.into_iter().collect();
            if let Some(&bad) = gold.iter().find(|&&p| p >= doc.paragraphs.len()) {
                return Err(CorpusError::Malformed {
                    line: line_no,
                    message: format!("gold paragraph {bad} out of range for {}", doc.doc_id),
                });
            }
            doc.gold_rationale = Some(gold);
            applied += 1;
        }
        Ok(applied)
    }
}

// ---------------------------------------------------------------------------
// JSONL interchange

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawParagraph {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawLabels {
    pub j: Option<u8>,
    #[serde(default)]
    pub alleged: Vec<String>,
    #[serde(default)]
    pub violated: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub paragraphs: Vec<RawParagraph>,
    pub state: String,
    pub labels: RawLabels,
    #[serde(default)]
    pub gold_rationale: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationaleOverlay {
    pub doc_id: String,
    pub gold_paragraphs: Vec<usize>,
}

impl RawDocument {
    fn from_document(d: &Document, registry: &ArticleRegistry) -> Self {
        RawDocument {
            doc_id: d.doc_id.clone(),
            paragraphs: d
                .paragraphs
                .iter()
                .map(|p| RawParagraph { index: p.index, text: p.raw_text.clone() })
                .collect(),
            state: d.state.clone(),
            labels: RawLabels {
                j: d.labels.j.map(u8::from),
                alleged: d.labels.alleged.iter().map(|&a| registry.id(a).to_string()).collect(),
                violated: d.labels.violated.iter().map(|&a| registry.id(a).to_string()).collect(),
            },
            gold_rationale: d.gold_rationale.as_ref().map(|g| g.iter().copied().collect()),
        }
    }

    fn into_document(mut self, line: usize, registry: &ArticleRegistry) -> Result<Document, CorpusError> {
        let malformed = |message: String| CorpusError::Malformed { line, message };
        if self.doc_id.trim().is_empty() {
            return Err(malformed("empty doc_id".into()));
        }
        self.paragraphs.sort_by_key(|p| p.index);
        for (pos, p) in self.paragraphs.iter().enumerate() {
            if p.index != pos {
                return Err(malformed(format!(
                    "paragraph indices must be contiguous from 0, found {} at position {pos}",
                    p.index
                )));
            }
        }
        let j = match self.labels.j {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(v) => return Err(malformed(format!("label j must be 0, 1 or null, got {v}"))),
        };
        let articles = |ids: &[String]| -> Result<BTreeSet<usize>, CorpusError> {
            ids.iter()
                .map(|id| {
                    registry
                        .index_of(id)
                        .ok_or_else(|| CorpusError::UnknownArticle { line, id: id.clone() })
                })
                .collect()
        };
        let labels = TaskLabels {
            j,
            alleged: articles(&self.labels.alleged)?,
            violated: articles(&self.labels.violated)?,
        };
        let n_par = self.paragraphs.len();
        let gold_rationale = match self.gold_rationale {
            None => None,
            Some(g) => {
                if let Some(&bad) = g.iter().find(|&&p| p >= n_par) {
                    return Err(malformed(format!("gold_rationale index {bad} out of range 0..{n_par}")));
                }
                Some(g.into_iter().collect())
            }
        };
        Ok(Document::new(
            self.doc_id,
            self.paragraphs.into_iter().map(|p| p.text).collect(),
            self.state,
            labels,
            gold_rationale,
        ))
    }
}

/// Parses JSONL text (one document per line, blank lines skipped).
pub fn parse_corpus(text: &str, registry: &ArticleRegistry) -> Result<Corpus, CorpusError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(line)
            .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
        if !seen.insert(raw.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId { line: line_no, doc_id: raw.doc_id });
        }
        docs.push(raw.into_document(line_no, registry)?);
    }
    Ok(Corpus { docs, registry: registry.clone() })
}

/// Reads and validates a corpus JSONL file.
pub fn ingest_corpus(path: &Path, registry: &ArticleRegistry) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    parse_corpus(&text, registry)
}

// ---------------------------------------------------------------------------
// Splits

/// Document indices of the train/dev/test partitions, each sorted by doc_id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random partition. `train_frac + dev_frac` must not exceed 1; the
/// remainder goes to test.
pub fn split_corpus(corpus: &Corpus, train_frac: f64, dev_frac: f64, seed: u64) -> Result<Splits, CorpusError> {
    if !(0.0..=1.0).contains(&train_frac) || !(0.0..=1.0).contains(&dev_frac) || train_frac + dev_frac > 1.0 {
        return Err(CorpusError::Invalid(format!("bad split fractions {train_frac}/{dev_frac}")));
    }
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.sort_by(|&a, &b| corpus.docs[a].doc_id.cmp(&corpus.docs[b].doc_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n = idx.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_dev = ((dev_frac * n as f64).round() as usize).min(n - n_train);
    let by_id = |mut v: Vec<usize>| {
        v.sort_by(|&a, &b| corpus.docs[a].doc_id.cmp(&corpus.docs[b].doc_id));
        v
    };
    Ok(Splits {
        train: by_id(idx[..n_train].to_vec()),
        dev: by_id(idx[n_train..n_train + n_dev].to_vec()),
        test: by_id(idx[n_train + n_dev..].to_vec()),
    })
}
