//! Seeded generator of confounded corpora.
//!
//! Every document carries three kinds of label signal:
//!
//! * genuine topical tokens, only inside its gold-rationale paragraphs;
//! * a decoy token in the first paragraph, present with probability `q` for
//!   positive documents and `1 - q` for negative ones;
//! * metadata confounders: a label-skewed respondent state (whose place names
//!   leak into one filler paragraph) and a label-dependent number of filler
//!   paragraphs.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArticleRegistry, Corpus, CorpusError, Document, TaskLabels, N_ARTICLES};

/// Decoy strings, in the order they are used.
pub const DECOY_TOKENS: [&str; 8] =
    ["represented", "practising", "summarised", "agent", "lawyer", "national", "mr", "paragraph"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_docs: usize,
    /// Articles (from the front of the registry) used for allegations.
    pub n_articles: usize,
    /// Size of each outcome-topical pool (one for violations, one for non-violations).
    pub genuine_vocab: usize,
    /// Topical tokens per article.
    pub article_vocab: usize,
    /// Number of distinct decoy tokens (at most 8).
    pub decoy_vocab: usize,
    pub filler_vocab: usize,
    pub n_states: usize,
    /// P(decoy | positive); P(decoy | negative) is `1 - decoy_rate`.
    pub decoy_rate: f64,
    /// Probability that the state is drawn from the label's half of the states
    /// instead of uniformly.
    pub state_skew: f64,
    /// Extra filler paragraphs given to positive documents.
    pub length_gap: usize,
    /// Positive documents start their paragraph numbering at a higher offset.
    pub paragraph_number_offset: bool,
    /// Probability that a genuine token comes from the document's own outcome pool.
    pub genuine_purity: f64,
    /// Genuine outcome tokens per gold paragraph.
    pub genuine_tokens: usize,
    /// Place-name tokens leaked into the state paragraph.
    pub state_tokens: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_docs: 2000,
            n_articles: N_ARTICLES,
            genuine_vocab: 40,
            article_vocab: 6,
            decoy_vocab: 1,
            filler_vocab: 300,
            n_states: 6,
            decoy_rate: 0.5,
            state_skew: 0.0,
            length_gap: 0,
            paragraph_number_offset: false,
            genuine_purity: 0.8,
            genuine_tokens: 5,
            state_tokens: 3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        for (name, p) in [
            ("decoy_rate", self.decoy_rate),
            ("state_skew", self.state_skew),
            ("genuine_purity", self.genuine_purity),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.n_articles == 0 || self.n_articles > N_ARTICLES {
            return bad(format!("n_articles must be in 1..={N_ARTICLES}"));
        }
        if self.decoy_vocab == 0 || self.decoy_vocab > DECOY_TOKENS.len() {
            return bad(format!("decoy_vocab must be in 1..={}", DECOY_TOKENS.len()));
        }
        if self.n_states < 2 {
            return bad("n_states must be at least 2".into());
        }
        if self.genuine_vocab == 0 || self.filler_vocab == 0 || self.article_vocab == 0 {
            return bad("vocabulary sizes must be positive".into());
        }
        Ok(())
    }

    pub fn decoys(&self) -> &'static [&'static str] {
        &DECOY_TOKENS[..self.decoy_vocab]
    }
}

fn state_code(s: usize) -> String {
    format!("S{s:02}")
}

struct Paragraph {
    sentences: Vec<Vec<String>>,
}

impl Paragraph {
    fn render(&self, number: usize) -> String {
        let body: Vec<String> = self
            .sentences
            .iter()
            .map(|s| {
                let mut text = s.join(" ");
                if let Some(first) = text.get(..1) {
                    let upper = first.to_uppercase();
                    text.replace_range(..1, &upper);
                }
                text.push('.');
                text
            })
            .collect();
        format!("{number}. {}", body.join(" "))
    }
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn filler_sentence(&mut self, len: usize) -> Vec<String> {
        (0..len).map(|_| format!("w{:03}", self.rng.random_range(0..self.spec.filler_vocab))).collect()
    }

    fn filler_paragraph(&mut self) -> Paragraph {
        let n = self.rng.random_range(1..=3);
        let sentences = (0..n)
            .map(|_| {
                let len = self.rng.random_range(5..=9);
                self.filler_sentence(len)
            })
            .collect();
        Paragraph { sentences }
    }

    fn insert_randomly(&mut self, sentence: &mut Vec<String>, token: String) {
        let at = self.rng.random_range(0..=sentence.len());
        sentence.insert(at, token);
    }

    fn genuine_token(&mut self, positive: bool) -> String {
        let own = self.rng.random_bool(self.spec.genuine_purity);
        let pool = if own == positive { "viol" } else { "lawf" };
        format!("{pool}{:02}", self.rng.random_range(0..self.spec.genuine_vocab))
    }

    fn gold_paragraph(&mut self, positive: bool, articles: &[usize]) -> Paragraph {
        let mut sentences = vec![self.filler_sentence(3), self.filler_sentence(3)];
        for k in 0..self.spec.genuine_tokens {
            let tok = self.genuine_token(positive);
            self.insert_randomly(&mut sentences[k % 2], tok);
        }
        for &a in articles {
            for sentence in &mut sentences {
                let tok = format!("art{a}t{}", self.rng.random_range(0..self.spec.article_vocab));
                self.insert_randomly(sentence, tok);
            }
        }
        Paragraph { sentences }
    }

    fn document(&mut self, i: usize, registry: &ArticleRegistry) -> Document {
        let spec = self.spec;
        let positive = self.rng.random_bool(0.5);

        let half = spec.n_states / 2;
        let state = if self.rng.random_bool(spec.state_skew) {
            if positive {
                self.rng.random_range(0..half)
            } else {
                self.rng.random_range(half..spec.n_states)
            }
        } else {
            self.rng.random_range(0..spec.n_states)
        };

        let n_alleged = self.rng.random_range(1..=2.min(spec.n_articles));
        let all: Vec<usize> = (0..spec.n_articles).collect();
        let alleged: BTreeSet<usize> = all.choose_multiple(&mut self.rng, n_alleged).copied().collect();
        let violated = if positive { alleged.clone() } else { BTreeSet::new() };

        let n_gold = self.rng.random_range(1..=3);
        let n_filler = self.rng.random_range(2..=4) + if positive { spec.length_gap } else { 0 };

        // Gold paragraphs split the alleged articles between them.
        let alleged_vec: Vec<usize> = alleged.iter().copied().collect();
        let mut body: Vec<(Paragraph, bool)> = (0..n_gold)
            .map(|g| {
                let arts: Vec<usize> =
                    alleged_vec.iter().copied().skip(g).step_by(n_gold).collect();
                (self.gold_paragraph(positive, &arts), true)
            })
            .collect();
        let mut fillers: Vec<Paragraph> = (0..n_filler).map(|_| self.filler_paragraph()).collect();
        for k in 0..spec.state_tokens {
            let tok = format!("loc{state}x{}", self.rng.random_range(0..4));
            let sentences = &mut fillers[0].sentences;
            let s = k % sentences.len();
            self.insert_randomly(&mut sentences[s], tok);
        }
        body.extend(fillers.into_iter().map(|p| (p, false)));
        // Fisher-Yates over the body paragraphs; the intro always stays first.
        for k in (1..body.len()).rev() {
            let j = self.rng.random_range(0..=k);
            body.swap(k, j);
        }

        let mut intro = Paragraph { sentences: vec![self.filler_sentence(6)] };
        let p_decoy = if positive { spec.decoy_rate } else { 1.0 - spec.decoy_rate };
        if self.rng.random_bool(p_decoy) {
            let decoy = spec.decoys()[self.rng.random_range(0..spec.decoy_vocab)].to_string();
            self.insert_randomly(&mut intro.sentences[0], decoy);
        }

        let start = if spec.paragraph_number_offset && positive { self.rng.random_range(5..=8) } else { 1 };
        let mut texts = vec![intro.render(start)];
        let mut gold = BTreeSet::new();
        for (k, (p, is_gold)) in body.iter().enumerate() {
            texts.push(p.render(start + k + 1));
            if *is_gold {
                gold.insert(k + 1);
            }
        }
        let labels = TaskLabels { j: Some(positive), alleged, violated };
        debug_assert!(labels.alleged.iter().all(|&a| a < registry.ids().len()));
        Document::new(format!("syn{i:05}"), texts, state_code(state), labels, Some(gold))
    }
}

/// Generates a corpus from `spec`. Identical specs give identical corpora.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let registry = ArticleRegistry::default();
    let mut g = Generator { spec, rng: ChaCha8Rng::seed_from_u64(spec.seed) };
    let docs = (0..spec.n_docs).map(|i| g.document(i, &registry)).collect();
    Corpus::new(docs, registry)
}
