//! Brute-force reference implementations, written without reference to the
//! library code paths they check. Shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use deconf::corpus::{ArticleRegistry, Corpus, Document, TaskLabels};
use deconf::treeminer::DecisionTree;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const ALPHABET: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

#[derive(Debug, Clone)]
pub struct MiniDoc {
    pub tokens: Vec<String>,
    pub label: bool,
}

/// At most `max_docs` documents over at most six single-letter tokens, with
/// both labels present.
pub fn random_docs<R: Rng>(rng: &mut R, max_docs: usize) -> Vec<MiniDoc> {
    loop {
        let n_docs = rng.random_range(2..=max_docs);
        let n_vocab = rng.random_range(1..=ALPHABET.len());
        let docs: Vec<MiniDoc> = (0..n_docs)
            .map(|_| {
                let len = rng.random_range(1..=5);
                MiniDoc {
                    tokens: (0..len).map(|_| ALPHABET[..n_vocab].choose(rng).unwrap().to_string()).collect(),
                    label: rng.random_bool(0.5),
                }
            })
            .collect();
        if docs.iter().any(|d| d.label) && docs.iter().any(|d| !d.label) {
            return docs;
        }
    }
}

/// One single-paragraph document per entry, labeled for task J.
pub fn corpus_of(docs: &[MiniDoc]) -> Corpus {
    let docs = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let labels = TaskLabels { j: Some(d.label), ..Default::default() };
            Document::new(format!("d{i:03}"), vec![d.tokens.join(" ")], "AAA", labels, None)
        })
        .collect();
    Corpus::new(docs, ArticleRegistry::default()).unwrap()
}

/// `(pmi, lmi)` of `token` with label `y`, counting occurrences or, with
/// `per_document`, documents.
pub fn lmi_brute(docs: &[MiniDoc], token: &str, y: bool, per_document: bool) -> (f64, f64) {
    let bag = |d: &MiniDoc| -> Vec<String> {
        if per_document {
            d.tokens.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
        } else {
            d.tokens.clone()
        }
    };
    let vocab: BTreeSet<&String> = docs.iter().flat_map(|d| &d.tokens).collect();
    let mut c_ty = 0.0;
    let mut c_t = 0.0;
    let mut mass_y = 0.0;
    let mut total = 0.0;
    for d in docs {
        for t in bag(d) {
            total += 1.0;
            if d.label == y {
                mass_y += 1.0;
            }
            if t == token {
                c_t += 1.0;
                if d.label == y {
                    c_ty += 1.0;
                }
            }
        }
    }
    let p_ty = c_ty / vocab.len() as f64;
    if c_ty == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    let pmi = ((c_ty / mass_y) / (c_t / total)).ln();
    (pmi, p_ty * pmi)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

// ---------------------------------------------------------------------------
// Trees

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { counts: [usize; 2] },
    Split { token: String, counts: [usize; 2], absent: Box<Node>, present: Box<Node> },
}

fn weighted_gini(groups: &[[usize; 2]]) -> f64 {
    groups
        .iter()
        .map(|c| {
            let n = (c[0] + c[1]) as f64;
            if n == 0.0 {
                return 0.0;
            }
            let (a, b) = (c[0] as f64 / n, c[1] as f64 / n);
            n * (1.0 - a * a - b * b)
        })
        .sum()
}

/// Greedy presence-feature Gini tree: best strict impurity reduction, ties
/// to the alphabetically first token.
pub fn tree_brute(tokens: &[String], rows: &[Vec<bool>], labels: &[bool], max_depth: usize) -> Node {
    let all: Vec<usize> = (0..labels.len()).collect();
    grow_brute(tokens, rows, labels, &all, 0, max_depth)
}

fn grow_brute(tokens: &[String], rows: &[Vec<bool>], labels: &[bool], idx: &[usize], depth: usize, max_depth: usize) -> Node {
    let count = |ix: &[usize]| {
        let pos = ix.iter().filter(|&&i| labels[i]).count();
        [ix.len() - pos, pos]
    };
    let counts = count(idx);
    if depth >= max_depth || counts[0] == 0 || counts[1] == 0 {
        return Node::Leaf { counts };
    }
    let parent = weighted_gini(&[counts]);
    let mut names: Vec<(usize, &String)> = tokens.iter().enumerate().collect();
    names.sort_by(|a, b| a.1.cmp(b.1));
    let mut best: Option<(usize, f64)> = None;
    for (f, _) in names {
        let (pre, abs): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][f]);
        if pre.is_empty() || abs.is_empty() {
            continue;
        }
        let w = weighted_gini(&[count(&abs), count(&pre)]);
        if w < parent - 1e-12 && best.is_none_or(|(_, b)| w < b - 1e-12) {
            best = Some((f, w));
        }
    }
    let Some((f, _)) = best else { return Node::Leaf { counts } };
    let (pre, abs): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][f]);
    Node::Split {
        token: tokens[f].clone(),
        counts,
        absent: Box::new(grow_brute(tokens, rows, labels, &abs, depth + 1, max_depth)),
        present: Box::new(grow_brute(tokens, rows, labels, &pre, depth + 1, max_depth)),
    }
}

/// The library's arena tree as a nested [`Node`].
pub fn nested(tree: &DecisionTree) -> Node {
    fn at(tree: &DecisionTree, i: usize) -> Node {
        let n = &tree.nodes[i];
        match &n.split {
            None => Node::Leaf { counts: n.counts },
            Some(s) => Node::Split {
                token: s.token.clone(),
                counts: n.counts,
                absent: Box::new(at(tree, s.absent)),
                present: Box::new(at(tree, s.present)),
            },
        }
    }
    at(tree, 0)
}

/// Presence rows over the sorted vocabulary of `docs`.
pub fn presence(docs: &[MiniDoc]) -> (Vec<String>, Vec<Vec<bool>>) {
    let vocab: Vec<String> = docs.iter().flat_map(|d| d.tokens.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let rows = docs.iter().map(|d| vocab.iter().map(|t| d.tokens.contains(t)).collect()).collect();
    (vocab, rows)
}

// ---------------------------------------------------------------------------
// Metrics

pub fn f1_brute(pred: &[bool], gold: &[bool]) -> f64 {
    let pairs: Vec<(bool, bool)> = pred.iter().copied().zip(gold.iter().copied()).collect();
    let tp = pairs.iter().filter(|&&(p, g)| p && g).count();
    let fp = pairs.iter().filter(|&&(p, g)| p && !g).count();
    let fn_ = pairs.iter().filter(|&&(p, g)| !p && g).count();
    if tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

fn column(m: &[Vec<bool>], j: usize) -> Vec<bool> {
    m.iter().map(|r| r[j]).collect()
}

/// `(macro, micro)` over the columns of a multi-label matrix.
pub fn macro_micro_brute(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> (f64, f64) {
    let w = gold[0].len();
    let per: Vec<f64> = (0..w).map(|j| f1_brute(&column(pred, j), &column(gold, j))).collect();
    let macro_f1 = per.iter().sum::<f64>() / w as f64;
    let flat_p: Vec<bool> = pred.iter().flatten().copied().collect();
    let flat_g: Vec<bool> = gold.iter().flatten().copied().collect();
    (macro_f1, f1_brute(&flat_p, &flat_g))
}

/// Mean per-article F1 restricted to documents that allege or violate the
/// article; articles never alleged are left out. `None` when nothing is left.
pub fn hard_macro_brute(pred: &[Vec<bool>], gold: &[Vec<bool>], alleged: &[Vec<bool>]) -> Option<f64> {
    let w = gold[0].len();
    let mut scores = Vec::new();
    for j in 0..w {
        if !alleged.iter().any(|a| a[j]) {
            continue;
        }
        let keep: Vec<usize> = (0..gold.len()).filter(|&i| gold[i][j] || alleged[i][j]).collect();
        let p: Vec<bool> = keep.iter().map(|&i| pred[i][j]).collect();
        let g: Vec<bool> = keep.iter().map(|&i| gold[i][j]).collect();
        scores.push(f1_brute(&p, &g));
    }
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

/// precision@k of paragraphs ranked by descending score, earlier paragraphs
/// first among equals: paragraph `i` is in the top k when fewer than `k`
/// paragraphs outrank it.
pub fn precision_at_k_brute(scores: &[f64], gold: &BTreeSet<usize>, k: usize) -> f64 {
    let outranked_by = |i: usize| (0..scores.len()).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let hits = (0..scores.len()).filter(|&i| outranked_by(i) < k && gold.contains(&i)).count();
    hits as f64 / k as f64
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, p: f64) -> Vec<Vec<bool>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_bool(p)).collect()).collect()
}

/// Histogram helper for the distribution checks.
pub fn tally<'a, I: IntoIterator<Item = &'a str>>(items: I) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in items {
        *m.entry(s.to_string()).or_default() += 1;
    }
    m
}
