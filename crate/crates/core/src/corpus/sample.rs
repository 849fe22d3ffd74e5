use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Document};

/// Attribute used to group documents for sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrataKey {
    /// Binary outcome label (documents without one are skipped).
    Outcome,
    State,
    /// One stratum per allegedly violated article; a document may belong to several.
    AllegedArticle,
    /// One stratum per violated article.
    ViolatedArticle,
    /// Two strata: documents containing the token and documents without it.
    Token(String),
}

impl StrataKey {
    fn strata_of(&self, doc: &Document, corpus: &Corpus) -> Vec<String> {
        match self {
            StrataKey::Outcome => doc.labels.j.map(|j| vec![u8::from(j).to_string()]).unwrap_or_default(),
            StrataKey::State => vec![doc.state.clone()],
            StrataKey::AllegedArticle => {
                doc.labels.alleged.iter().map(|&a| corpus.registry.id(a).to_string()).collect()
            }
            StrataKey::ViolatedArticle => {
                doc.labels.violated.iter().map(|&a| corpus.registry.id(a).to_string()).collect()
            }
            StrataKey::Token(t) => {
                let tag = if doc.contains_token(t) { "with" } else { "without" };
                vec![format!("{tag}:{t}")]
            }
        }
    }

    /// Strata that must exist even when empty (so shortfalls are reported).
    fn expected_strata(&self, corpus: &Corpus) -> Vec<String> {
        match self {
            StrataKey::AllegedArticle | StrataKey::ViolatedArticle => corpus.registry.ids().to_vec(),
            StrataKey::Outcome => vec!["0".into(), "1".into()],
            StrataKey::Token(t) => vec![format!("with:{t}"), format!("without:{t}")],
            StrataKey::State => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub stratum: String,
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub doc_ids: Vec<String>,
    pub shortfalls: Vec<Shortfall>,
}

/// Draws up to `per_stratum` documents from every stratum, without
/// replacement across strata. Strata are visited in sorted order and members
/// are shuffled after sorting by doc_id, so the result depends only on the
/// corpus content, the request and `seed`.
pub fn stratified_sample(corpus: &Corpus, per_stratum: usize, key: &StrataKey, seed: u64) -> SampleReport {
    let mut strata: BTreeMap<String, Vec<&str>> =
        key.expected_strata(corpus).into_iter().map(|s| (s, Vec::new())).collect();
    for doc in &corpus.docs {
        for s in key.strata_of(doc, corpus) {
            strata.entry(s).or_default().push(doc.doc_id.as_str());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: BTreeSet<&str> = BTreeSet::new();
    let mut doc_ids = Vec::new();
    let mut shortfalls = Vec::new();
    for (name, mut members) in strata {
        members.sort_unstable();
        members.shuffle(&mut rng);
        let mut got = 0;
        for id in members {
            if got == per_stratum {
                break;
            }
            if taken.insert(id) {
                doc_ids.push(id.to_string());
                got += 1;
            }
        }
        if got < per_stratum {
            log::warn!("stratum {name}: requested {per_stratum}, only {got} available");
            shortfalls.push(Shortfall { stratum: name, requested: per_stratum, available: got });
        }
    }
    SampleReport { doc_ids, shortfalls }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ArticleRegistry, TaskLabels};

    fn corpus(per_article: &[usize]) -> Corpus {
        let mut docs = Vec::new();
        for (a, &n) in per_article.iter().enumerate() {
            for i in 0..n {
                let labels = TaskLabels {
                    j: Some(true),
                    alleged: [a].into(),
                    violated: [a].into(),
                };
                docs.push(Document::new(format!("a{a}-{i}"), vec!["text".into()], "S", labels, None));
            }
        }
        Corpus::new(docs, ArticleRegistry::default()).unwrap()
    }

    #[test]
    fn two_per_article() {
        let c = corpus(&[5; 10]);
        let r = stratified_sample(&c, 2, &StrataKey::ViolatedArticle, 1);
        assert_eq!(r.doc_ids.len(), 20);
        assert!(r.shortfalls.is_empty());
        for a in 0..10 {
            let n = r.doc_ids.iter().filter(|id| id.starts_with(&format!("a{a}-"))).count();
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn shortfall_reported() {
        let mut counts = [5; 10];
        counts[4] = 1;
        let c = corpus(&counts);
        let r = stratified_sample(&c, 2, &StrataKey::ViolatedArticle, 1);
        assert_eq!(r.doc_ids.len(), 19);
        assert_eq!(r.shortfalls.len(), 1);
        assert_eq!(r.shortfalls[0].available, 1);
    }

    #[test]
    fn empty_stratum_is_not_fatal() {
        let mut counts = [3; 10];
        counts[0] = 0;
        let r = stratified_sample(&corpus(&counts), 1, &StrataKey::ViolatedArticle, 9);
        assert_eq!(r.doc_ids.len(), 9);
        assert_eq!(r.shortfalls[0].available, 0);
    }

    #[test]
    fn seed_determines_sample_and_doc_order_does_not() {
        let c = corpus(&[6; 10]);
        let a = stratified_sample(&c, 2, &StrataKey::ViolatedArticle, 42);
        let b = stratified_sample(&c, 2, &StrataKey::ViolatedArticle, 42);
        assert_eq!(a, b);
        let mut rev = c.clone();
        rev.docs.reverse();
        assert_eq!(a, stratified_sample(&rev, 2, &StrataKey::ViolatedArticle, 42));
    }
}
