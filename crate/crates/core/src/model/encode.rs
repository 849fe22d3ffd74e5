use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::packing::{pack_sentences, TokenRef};
use super::{Head, ModelConfig, ModelError, Variant};
use crate::corpus::{derive_length_bins, Corpus, Document, LengthBinning, N_ARTICLES};

pub const UNK: &str = "<unk>";

/// Token vocabulary; id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![UNK.to_string()];
        let set: BTreeSet<String> = tokens.into_iter().filter(|t| t != UNK).collect();
        all.extend(set);
        Self::from_list(all)
    }

    fn from_list(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Vocab::new(corpus.docs.iter().flat_map(|d| d.tokens().map(str::to_string)))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindexed(self) -> Self {
        Self::from_list(self.tokens)
    }
}

/// Label spaces fixed at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registries {
    pub vocab: Vocab,
    /// Respondent-state codes seen in training, sorted.
    pub states: Vec<String>,
    pub binning: Option<LengthBinning>,
    /// Spurious lexicon tokens in lexicon order.
    pub lexicon: Vec<String>,
}

pub(crate) fn prepared(corpus: &Corpus, variant: Variant) -> Cow<'_, Corpus> {
    if variant.strips_paragraph_numbers() {
        Cow::Owned(corpus.strip_paragraph_numbers())
    } else {
        Cow::Borrowed(corpus)
    }
}

impl Registries {
    /// Builds the registries from the training split. The spurious lexicon is
    /// required when the variant has a vocabulary head; length bins are
    /// derived from `train` unless given.
    pub fn build(
        train: &Corpus,
        cfg: &ModelConfig,
        lexicon: Option<Vec<String>>,
        binning: Option<LengthBinning>,
    ) -> Result<Self, ModelError> {
        let heads = cfg.variant.heads();
        let lexicon = lexicon.unwrap_or_default();
        if heads.contains(&Head::Vocab) && lexicon.is_empty() {
            return Err(ModelError::MissingArtifact { variant: cfg.variant, artifact: "a spurious lexicon" });
        }
        let binning = match binning {
            Some(b) => Some(b),
            None if heads.contains(&Head::Length) => Some(
                derive_length_bins(train, cfg.length_bins).map_err(|e| ModelError::Config(e.to_string()))?,
            ),
            None => None,
        };
        let train = prepared(train, cfg.variant);
        let states: BTreeSet<String> = train.docs.iter().map(|d| d.state.clone()).collect();
        Ok(Registries { vocab: Vocab::from_corpus(&train), states: states.into_iter().collect(), binning, lexicon })
    }

    pub fn n_classes(&self, head: Head) -> usize {
        match head {
            Head::Country => self.states.len(),
            Head::Length => self.binning.as_ref().map_or(0, |b| b.n_bins),
            Head::Vocab => self.lexicon.len(),
        }
    }
}

/// A document ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDoc {
    pub doc_id: String,
    /// Token ids per packet.
    pub packets: Vec<Vec<usize>>,
    /// Source position of every packed token, parallel to `packets`.
    pub token_refs: Vec<Vec<TokenRef>>,
    /// Token count per paragraph.
    pub paragraph_tokens: Vec<usize>,
    /// Main-task targets in {0, 1}; `None` when the document is unlabeled.
    pub target: Option<Vec<f64>>,
    pub state: Option<usize>,
    pub length_bin: Option<usize>,
    /// Presence of each lexicon token.
    pub vocab_hot: Vec<f64>,
    /// Allegation multi-hot.
    pub alleged: Vec<f64>,
}

impl EncodedDoc {
    pub fn n_tokens(&self) -> usize {
        self.packets.iter().map(Vec::len).sum()
    }

    pub fn encode(doc: &Document, reg: &Registries, cfg: &ModelConfig) -> Self {
        let packets = pack_sentences(doc, cfg.packet_max_tokens);
        let ids = packets.iter().map(|p| p.tokens.iter().map(|t| reg.vocab.id(&t.text)).collect()).collect();
        let target = cfg.task.targets(doc).map(|v| v.into_iter().map(|b| f64::from(u8::from(b))).collect());
        let state = reg.states.binary_search(&doc.state).ok();
        let length_bin = reg.binning.as_ref().map(|b| b.bin(doc.n_sentences));
        let vocab_hot = reg.lexicon.iter().map(|t| f64::from(u8::from(doc.contains_token(t)))).collect();
        let alleged = (0..N_ARTICLES).map(|a| f64::from(u8::from(doc.labels.alleged.contains(&a)))).collect();
        EncodedDoc {
            doc_id: doc.doc_id.clone(),
            packets: ids,
            token_refs: packets.into_iter().map(|p| p.tokens).collect(),
            paragraph_tokens: doc.paragraphs.iter().map(|p| p.n_tokens()).collect(),
            target,
            state,
            length_bin,
            vocab_hot,
            alleged,
        }
    }
}

/// Encodes every document of `corpus` for the configured variant (paragraph
/// numbers are stripped first where the variant asks for it).
pub fn encode_corpus(corpus: &Corpus, reg: &Registries, cfg: &ModelConfig) -> Vec<EncodedDoc> {
    let c = prepared(corpus, cfg.variant);
    c.docs.iter().map(|d| EncodedDoc::encode(d, reg, cfg)).collect()
}

/// Mini-batch; documents are held in `doc_id` order so the loss reduction
/// does not depend on the order they were drawn in.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub docs: Vec<&'a EncodedDoc>,
}

impl<'a> Batch<'a> {
    pub fn new(mut docs: Vec<&'a EncodedDoc>) -> Self {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Batch { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}
