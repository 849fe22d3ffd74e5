//! Integrated-gradients attribution, paragraph aggregation and rationale
//! alignment scoring.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArticleRegistry, Corpus};
use crate::diffcore::{DiffError, Graph, Tensor, Var};
use crate::exec::Exec;
use crate::hashing::derive_seed;
use crate::model::{encode_corpus, EncodedDoc, ModelBundle, ModelError, TokenRef};
use crate::task::Task;

pub const DEFAULT_IG_STEPS: usize = 128;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("ig steps must be at least 1")]
    ZeroSteps,
    #[error("non-finite gradient while attributing {0}")]
    NonFinite(String),
    #[error("gold rationale is empty")]
    EmptyGold,
    #[error("k={k} outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("target output {output} outside 0..{n_outputs}")]
    BadTarget { output: usize, n_outputs: usize },
    #[error("no document with a gold rationale")]
    NoRationales,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Which output logit to attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// A fixed output column (the single logit for task J, an article index
    /// otherwise).
    Output(usize),
    /// The document's highest-scoring output.
    ArgMax,
}

/// IG scores over a set of input matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct IgScores {
    /// Per row of every input, in input order.
    pub scores: Vec<Vec<f64>>,
    pub f_input: f64,
    pub f_baseline: f64,
    pub completeness_gap: f64,
}

/// Integrated gradients of a scalar function of several matrices, from an
/// all-zero baseline, with an `m`-step midpoint Riemann sum. The score of
/// row `i` of input `j` is `x_ji · (Σ_k ∇f(α_k x))_ji / m`.
pub fn integrated_gradients<F>(inputs: &[Tensor], f: F, steps: usize) -> Result<IgScores, AttributionError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AttributionError>,
{
    if steps == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    let value_at = |scale: f64| -> Result<f64, AttributionError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.constant(x.scale(scale))).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut acc: Vec<Tensor> = inputs.iter().map(|x| Tensor::zeros(x.rows(), x.cols())).collect();
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.scale(alpha))).collect();
        let out = f(&mut g, &vars)?;
        g.backward(out)?;
        for (a, &v) in acc.iter_mut().zip(&vars) {
            if let Some(grad) = g.grad(v) {
                a.add_assign(grad);
            }
        }
    }
    let scores: Vec<Vec<f64>> = inputs
        .iter()
        .zip(&acc)
        .map(|(x, a)| {
            (0..x.rows())
                .map(|r| x.row(r).iter().zip(a.row(r)).map(|(e, g)| e * g).sum::<f64>() / steps as f64)
                .collect()
        })
        .collect();
    if scores.iter().flatten().any(|s| !s.is_finite()) {
        return Err(AttributionError::NonFinite("input".into()));
    }
    let f_input = value_at(1.0)?;
    let f_baseline = value_at(0.0)?;
    let total: f64 = scores.iter().flatten().sum();
    Ok(IgScores { scores, f_input, f_baseline, completeness_gap: (total - (f_input - f_baseline)).abs() })
}

/// Attribution of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub doc_id: String,
    pub target: String,
    /// One score per packed token, in document order.
    pub token_scores: Vec<f64>,
    pub paragraph_scores: Vec<f64>,
    pub ranking: Vec<usize>,
    pub ig_steps: usize,
    pub completeness_gap: f64,
    /// `F(x) − F(baseline)` for the target logit.
    pub output_delta: f64,
    #[serde(skip)]
    pub tokens: Vec<TokenRef>,
}

/// `Σ s² / √n` per paragraph, where `n` is the paragraph's token count. For
/// task B negative token scores are zeroed first.
pub fn paragraph_scores(token_scores: &[f64], tokens: &[TokenRef], paragraph_tokens: &[usize], task: Task) -> Vec<f64> {
    let mut sums = vec![0.0; paragraph_tokens.len()];
    for (&s, t) in token_scores.iter().zip(tokens) {
        let s = if task == Task::B { s.max(0.0) } else { s };
        sums[t.paragraph] += s * s;
    }
    sums.iter()
        .zip(paragraph_tokens)
        .map(|(&sq, &n)| if n == 0 { 0.0 } else { sq / (n as f64).sqrt() })
        .collect()
}

/// Paragraph indices by descending score; ties by ascending index.
pub fn rank_paragraphs(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn precision_at_k(ranking: &[usize], gold: &BTreeSet<usize>, k: usize) -> Result<f64, AttributionError> {
    if gold.is_empty() {
        return Err(AttributionError::EmptyGold);
    }
    if k == 0 || k > ranking.len() {
        return Err(AttributionError::BadK { k, n: ranking.len() });
    }
    let hits = ranking[..k].iter().filter(|p| gold.contains(p)).count();
    Ok(hits as f64 / k as f64)
}

/// precision@k with `k` = number of gold paragraphs.
pub fn precision_at_oracle(ranking: &[usize], gold: &BTreeSet<usize>) -> Result<f64, AttributionError> {
    precision_at_k(ranking, gold, gold.len())
}

fn target_label(task: Task, output: usize) -> String {
    match task {
        Task::J => "J".into(),
        _ => format!("{task}:art{}", ArticleRegistry::default().id(output)),
    }
}

/// Integrated gradients for one encoded document with respect to the
/// embeddings of its tokens.
pub fn attribute_document(
    bundle: &ModelBundle,
    doc: &EncodedDoc,
    target: Target,
    steps: usize,
) -> Result<AttributionResult, AttributionError> {
    let n_outputs = bundle.task().n_outputs();
    let output = match target {
        Target::Output(o) if o < n_outputs => o,
        Target::Output(o) => return Err(AttributionError::BadTarget { output: o, n_outputs }),
        Target::ArgMax => {
            let l = bundle.forward(doc)?.logits;
            (0..l.cols()).fold(0, |best, c| if l.get(0, c) > l.get(0, best) { c } else { best })
        }
    };
    let table = bundle.embedding_table();
    let inputs: Vec<Tensor> = doc
        .packets
        .iter()
        .map(|ids| {
            let mut data = Vec::with_capacity(ids.len() * table.cols());
            for &i in ids {
                data.extend_from_slice(table.row(i));
            }
            Tensor::from_vec(ids.len(), table.cols(), data)
        })
        .collect();
    let f = |g: &mut Graph, packets: &[Var]| -> Result<Var, AttributionError> {
        let p = bundle.bind(g, false);
        let v = bundle.doc_vector_from_embeddings(g, &p, packets)?;
        let logits = bundle.classify(g, &p, v, &doc.alleged)?;
        Ok(g.slice_cols(logits, output, 1)?)
    };
    let ig = integrated_gradients(&inputs, f, steps).map_err(|e| match e {
        AttributionError::NonFinite(_) => AttributionError::NonFinite(doc.doc_id.clone()),
        other => other,
    })?;
    let token_scores: Vec<f64> = ig.scores.into_iter().flatten().collect();
    let tokens: Vec<TokenRef> = doc.token_refs.iter().flatten().cloned().collect();
    let paragraph_scores = paragraph_scores(&token_scores, &tokens, &doc.paragraph_tokens, bundle.task());
    let ranking = rank_paragraphs(&paragraph_scores);
    Ok(AttributionResult {
        doc_id: doc.doc_id.clone(),
        target: target_label(bundle.task(), output),
        token_scores,
        paragraph_scores,
        ranking,
        ig_steps: steps,
        completeness_gap: ig.completeness_gap,
        output_delta: ig.f_input - ig.f_baseline,
        tokens,
    })
}

/// Attributes every document of `corpus`; documents are independent and run
/// through `exec`, results keep corpus order.
pub fn attribute_corpus(
    bundle: &ModelBundle,
    corpus: &Corpus,
    target: Target,
    steps: usize,
    exec: Exec,
) -> Result<Vec<AttributionResult>, AttributionError> {
    let docs = encode_corpus(corpus, &bundle.registries, &bundle.config);
    exec.map(&docs, |d| attribute_document(bundle, d, target, steps)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub doc_id: String,
    pub oracle: usize,
    pub p_at_oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub mean_p_at_oracle: f64,
    /// Standard deviation of the per-document values (population form)
    /// divided by `√n`.
    pub se: f64,
    pub n: usize,
    /// Documents without a gold rationale.
    pub skipped: usize,
    pub rows: Vec<AlignmentRow>,
}

/// Mean and standard error of per-document precision@Oracle values.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt() / n.sqrt())
}

/// Scores attribution rankings against the gold rationales of `corpus`.
pub fn alignment_report(results: &[AttributionResult], corpus: &Corpus) -> Result<AlignmentReport, AttributionError> {
    let mut rows = Vec::new();
    let mut skipped = 0;
    for r in results {
        match corpus.find(&r.doc_id).and_then(|d| d.gold_rationale.as_ref()).filter(|g| !g.is_empty()) {
            Some(gold) => rows.push(AlignmentRow {
                doc_id: r.doc_id.clone(),
                oracle: gold.len(),
                p_at_oracle: precision_at_oracle(&r.ranking, gold)?,
            }),
            None => skipped += 1,
        }
    }
    if rows.is_empty() {
        return Err(AttributionError::NoRationales);
    }
    let values: Vec<f64> = rows.iter().map(|r| r.p_at_oracle).collect();
    let (mean, se) = summarize(&values);
    Ok(AlignmentReport { mean_p_at_oracle: mean, se, n: rows.len(), skipped, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub trials: usize,
    pub mean: f64,
    /// Standard error of the Monte-Carlo mean.
    pub se: f64,
    /// `G / N`.
    pub expected: f64,
}

const MC_BLOCK: usize = 10_000;

/// Monte-Carlo precision@Oracle of uniformly random rankings of
/// `n_paragraphs` paragraphs against a gold set of `gold_size`. Trials run
/// in fixed seeded blocks, so the result does not depend on `exec`.
pub fn random_ranking_precision(
    n_paragraphs: usize,
    gold_size: usize,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<RandomBaseline, AttributionError> {
    if gold_size == 0 {
        return Err(AttributionError::EmptyGold);
    }
    if gold_size > n_paragraphs {
        return Err(AttributionError::BadK { k: gold_size, n: n_paragraphs });
    }
    let n_blocks = trials.div_ceil(MC_BLOCK);
    let sums = exec.map_range(n_blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b as u64]));
        let count = MC_BLOCK.min(trials - b * MC_BLOCK);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..count {
            // Gold is {0..G}; the top G of a uniform permutation is a uniform
            // G-subset.
            let top = sample(&mut rng, n_paragraphs, gold_size);
            let p = top.iter().filter(|&i| i < gold_size).count() as f64 / gold_size as f64;
            s += p;
            s2 += p * p;
        }
        (s, s2)
    });
    let (s, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(RandomBaseline { trials, mean, se: (var / n).sqrt(), expected: gold_size as f64 / n_paragraphs as f64 })
}

/// One JSON object per line.
pub fn to_jsonl(results: &[AttributionResult]) -> String {
    results.iter().map(|r| serde_json::to_string(r).expect("attribution serializes") + "\n").collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static HTML view: each token shaded with opacity proportional to its
/// absolute score (normalized per document), paragraphs annotated with their
/// score and gold membership.
pub fn render_html(results: &[AttributionResult], corpus: &Corpus, header: &str) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attributions</title>\n<style>\
         body{font-family:serif;max-width:60em;margin:auto}\
         .tok{background:rgba(220,40,40,var(--a))}\
         .gold{border-left:4px solid #2a7}p{padding-left:.5em}</style></head><body>\n",
    );
    let _ = writeln!(out, "<p><em>{}</em></p>", escape(header));
    for r in results {
        let gold = corpus.find(&r.doc_id).and_then(|d| d.gold_rationale.clone()).unwrap_or_default();
        let max = r.token_scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let _ = writeln!(out, "<h2>{} ({})</h2>", escape(&r.doc_id), escape(&r.target));
        let mut para = usize::MAX;
        for (t, s) in r.tokens.iter().zip(&r.token_scores) {
            if t.paragraph != para {
                if para != usize::MAX {
                    out.push_str("</p>\n");
                }
                para = t.paragraph;
                let class = if gold.contains(&para) { " class=\"gold\"" } else { "" };
                let score = r.paragraph_scores.get(para).copied().unwrap_or(0.0);
                let _ = write!(out, "<p{class} title=\"paragraph {para} score {score:.4}\">");
            }
            let a = if max > 0.0 { s.abs() / max } else { 0.0 };
            let _ = write!(out, "<span class=\"tok\" style=\"--a:{a:.3}\">{}</span> ", escape(&t.text));
        }
        if para != usize::MAX {
            out.push_str("</p>\n");
        }
    }
    out.push_str("</body></html>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn refs(paragraphs: &[usize]) -> Vec<TokenRef> {
        paragraphs
            .iter()
            .enumerate()
            .map(|(k, &p)| TokenRef { paragraph: p, sentence: 0, offset: k, text: format!("t{k}") })
            .collect()
    }

    #[test]
    fn paragraph_formula() {
        assert_eq!(paragraph_scores(&[1.0; 4], &refs(&[0; 4]), &[4], Task::J), vec![2.0]);
        assert_relative_eq!(paragraph_scores(&[3.0, 4.0], &refs(&[0, 0]), &[2], Task::A)[0], 25.0 / 2f64.sqrt());
        assert_relative_eq!(paragraph_scores(&[-5.0, 2.0], &refs(&[0, 0]), &[2], Task::B)[0], 4.0 / 2f64.sqrt());
        assert_relative_eq!(paragraph_scores(&[-5.0, 2.0], &refs(&[0, 0]), &[2], Task::A)[0], 29.0 / 2f64.sqrt());
        assert_eq!(paragraph_scores(&[], &[], &[0, 3], Task::J), vec![0.0, 0.0]);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        assert_eq!(rank_paragraphs(&[1.0, 3.0, 1.0, 3.0, 0.0]), vec![1, 3, 0, 2, 4]);
    }

    #[test]
    fn precision_examples() {
        let gold: BTreeSet<usize> = [2, 5].into();
        assert_eq!(precision_at_k(&[5, 7, 2], &gold, 2).unwrap(), 0.5);
        assert_eq!(precision_at_oracle(&[5, 2, 0, 1], &gold).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[0, 1, 2, 5], &gold, 2).unwrap(), 0.0);
        let gold: BTreeSet<usize> = [0, 1, 2].into();
        assert_relative_eq!(precision_at_oracle(&[0, 9, 8, 1, 2], &gold).unwrap(), 1.0 / 3.0);
        assert!(matches!(precision_at_k(&[0], &BTreeSet::new(), 1), Err(AttributionError::EmptyGold)));
        assert!(precision_at_k(&[0, 1], &gold, 3).is_err());
    }

    #[test]
    fn standard_error_examples() {
        assert_eq!(summarize(&[1.0, 1.0, 1.0]), (1.0, 0.0));
        let (m, se) = summarize(&[1.0, 0.0]);
        assert_eq!(m, 0.5);
        assert!((se - 0.3536).abs() < 1e-4);
    }

    #[test]
    fn constant_function_has_zero_scores() {
        let x = Tensor::from_vec(3, 2, vec![1.0, 2.0, -1.0, 0.5, 4.0, 4.0]);
        let ig = integrated_gradients(&[x], |g, _| Ok(g.constant(Tensor::scalar(7.0))), 16).unwrap();
        assert!(ig.scores[0].iter().all(|&s| s == 0.0));
        assert_eq!(ig.completeness_gap, 0.0);
    }

    #[test]
    fn linear_scoring_is_exact_for_one_step() {
        let w = Tensor::from_vec(2, 1, vec![0.5, -2.0]);
        let x = Tensor::from_vec(3, 2, vec![1.0, 2.0, -1.0, 0.5, 4.0, 4.0]);
        let ig = integrated_gradients(
            std::slice::from_ref(&x),
            |g, v| {
                let wv = g.constant(w.clone());
                let s = g.matmul(v[0], wv)?;
                Ok(g.sum(s))
            },
            1,
        )
        .unwrap();
        for r in 0..3 {
            let expect = x.get(r, 0) * 0.5 - 2.0 * x.get(r, 1);
            assert_relative_eq!(ig.scores[0][r], expect, epsilon = 1e-12);
        }
        assert!(ig.completeness_gap < 1e-12);
    }

    #[test]
    fn random_baseline_is_independent_of_strategy() {
        let a = random_ranking_precision(8, 3, 25_000, 1, Exec::Sequential).unwrap();
        let b = random_ranking_precision(8, 3, 25_000, 1, Exec::Parallel { threads: 0 }).unwrap();
        assert_eq!(a, b);
        assert!((a.mean - a.expected).abs() < 4.0 * a.se);
    }
}
