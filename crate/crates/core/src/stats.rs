//! Token/label association statistics: PMI, local mutual information (LMI),
//! effective LMI and z-score filtering.
//!
//! For a token `t` and binary label `y` under a [`LabelView`]:
//!
//! ```text
//! p(t, y)     = count(t, y) / |D|          |D| = number of distinct tokens
//! PMI(t, y)   = ln( p(t | y) / p(t) )      p(t | y) = count(t, y) / mass(y)
//!                                           p(t)     = count(t) / total mass
//! LMI(t, y)   = p(t, y) * PMI(t, y)
//! ```
//!
//! `p(t, y)` is deliberately not normalized over the joint space. A zero
//! co-occurrence count gives `LMI = 0` (the `x ln x` limit) and is flagged.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::task::{Framing, LabelView};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("label view {view} has an empty {class} class")]
    EmptyClass { view: String, class: &'static str },
    #[error("token {0:?} does not occur in the table")]
    UnknownToken(String),
    #[error("label {0} carries no token mass")]
    EmptyLabel(bool),
}

/// Whether co-occurrences count every token occurrence or once per document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CountMode {
    #[default]
    Occurrence,
    Document,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    pub view: String,
    pub framing: Framing,
    /// token -> [count with negative label, count with positive label]
    counts: BTreeMap<String, [u64; 2]>,
    label_mass: [u64; 2],
    total_mass: u64,
}

fn slot(y: bool) -> usize {
    usize::from(y)
}

impl CooccurrenceTable {
    pub fn count(&self, token: &str, y: bool) -> u64 {
        self.counts.get(token).map_or(0, |c| c[slot(y)])
    }

    pub fn token_count(&self, token: &str) -> u64 {
        self.counts.get(token).map_or(0, |c| c[0] + c[1])
    }

    pub fn label_mass(&self, y: bool) -> u64 {
        self.label_mass[slot(y)]
    }

    pub fn total_mass(&self) -> u64 {
        self.total_mass
    }

    /// `|D|`: number of distinct tokens seen in the table's documents.
    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }
}

/// Counts token/label co-occurrences over the documents labeled by `view`.
/// Pass the training split only.
pub fn build_table(corpus: &Corpus, view: LabelView, mode: CountMode) -> Result<CooccurrenceTable, StatsError> {
    let mut counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
    let mut label_mass = [0u64; 2];
    let mut docs_per_label = [0usize; 2];
    for doc in &corpus.docs {
        let Some(y) = view.label(doc) else { continue };
        docs_per_label[slot(y)] += 1;
        match mode {
            CountMode::Occurrence => {
                for t in doc.tokens() {
                    counts.entry(t.to_string()).or_default()[slot(y)] += 1;
                    label_mass[slot(y)] += 1;
                }
            }
            CountMode::Document => {
                let distinct: BTreeSet<&str> = doc.tokens().collect();
                for t in distinct {
                    counts.entry(t.to_string()).or_default()[slot(y)] += 1;
                    label_mass[slot(y)] += 1;
                }
            }
        }
    }
    let name = view.name(corpus);
    for (y, class) in [(false, "negative"), (true, "positive")] {
        if docs_per_label[slot(y)] == 0 {
            return Err(StatsError::EmptyClass { view: name, class });
        }
    }
    Ok(CooccurrenceTable {
        view: name,
        framing: view.framing(),
        counts,
        label_mass,
        total_mass: label_mass[0] + label_mass[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiScore {
    pub token: String,
    pub label: bool,
    pub p_ty: f64,
    /// `-inf` when the token never co-occurs with the label.
    pub pmi: f64,
    pub lmi: f64,
    /// Set when `count(t, y) = 0` and the zero-count convention applied.
    pub zero_count: bool,
}

pub fn lmi(table: &CooccurrenceTable, token: &str, y: bool) -> Result<LmiScore, StatsError> {
    let c_t = table.token_count(token);
    if c_t == 0 {
        return Err(StatsError::UnknownToken(token.to_string()));
    }
    let mass_y = table.label_mass(y);
    if mass_y == 0 {
        return Err(StatsError::EmptyLabel(y));
    }
    let c_ty = table.count(token, y);
    let p_ty = c_ty as f64 / table.vocab_size() as f64;
    if c_ty == 0 {
        return Ok(LmiScore {
            token: token.to_string(),
            label: y,
            p_ty,
            pmi: f64::NEG_INFINITY,
            lmi: 0.0,
            zero_count: true,
        });
    }
    let p_t_given_y = c_ty as f64 / mass_y as f64;
    let p_t = c_t as f64 / table.total_mass() as f64;
    let pmi = (p_t_given_y / p_t).ln();
    Ok(LmiScore { token: token.to_string(), label: y, p_ty, pmi, lmi: p_ty * pmi, zero_count: false })
}

/// Contrast of the positive and negative LMI: absolute difference for binary
/// and one-vs-one framings, signed difference for one-vs-rest.
pub fn contrast(lmi_pos: f64, lmi_neg: f64, framing: Framing) -> f64 {
    match framing {
        Framing::Binary | Framing::OneVsOne => (lmi_pos - lmi_neg).abs(),
        Framing::OneVsRest => lmi_pos - lmi_neg,
    }
}

pub fn effective_lmi(table: &CooccurrenceTable, token: &str) -> Result<f64, StatsError> {
    let pos = lmi(table, token, true)?;
    let neg = lmi(table, token, false)?;
    Ok(contrast(pos.lmi, neg.lmi, table.framing))
}

/// One row of the score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    pub count_pos: u64,
    pub count_neg: u64,
    pub pmi_pos: f64,
    pub lmi_pos: f64,
    pub lmi_neg: f64,
    pub effective_lmi: f64,
    /// Standard score of `effective_lmi` within the table; NaN when the
    /// population has no spread.
    pub z: f64,
}

/// Population z-scores. `None` for fewer than two values or zero spread.
pub fn z_scores(values: &[f64]) -> Option<Vec<f64>> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Scores every token of the table, in token order.
pub fn score_tokens(table: &CooccurrenceTable) -> Vec<TokenScore> {
    let mut rows: Vec<TokenScore> = table
        .tokens()
        .map(|t| {
            let pos = lmi(table, t, true).expect("token present, masses nonzero");
            let neg = lmi(table, t, false).expect("token present, masses nonzero");
            TokenScore {
                token: t.to_string(),
                count_pos: table.count(t, true),
                count_neg: table.count(t, false),
                pmi_pos: pos.pmi,
                lmi_pos: pos.lmi,
                lmi_neg: neg.lmi,
                effective_lmi: contrast(pos.lmi, neg.lmi, table.framing),
                z: f64::NAN,
            }
        })
        .collect();
    let eff: Vec<f64> = rows.iter().map(|r| r.effective_lmi).collect();
    if let Some(z) = z_scores(&eff) {
        for (r, z) in rows.iter_mut().zip(z) {
            r.z = z;
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZFilter {
    pub tokens: BTreeSet<String>,
    pub warning: Option<String>,
}

/// Keeps the tokens whose effective-LMI z-score is at least `z_min`. The
/// z-scores are recomputed over `scores` (population standard deviation).
pub fn zscore_filter(scores: &[TokenScore], z_min: f64) -> ZFilter {
    let eff: Vec<f64> = scores.iter().map(|s| s.effective_lmi).collect();
    match z_scores(&eff) {
        None => {
            let warning = format!("effective LMI has no spread over {} tokens; nothing selected", scores.len());
            log::warn!("{warning}");
            ZFilter { tokens: BTreeSet::new(), warning: Some(warning) }
        }
        Some(z) => ZFilter {
            tokens: scores
                .iter()
                .zip(z)
                .filter(|(_, z)| *z >= z_min)
                .map(|(s, _)| s.token.clone())
                .collect(),
            warning: None,
        },
    }
}

pub const SCORE_TSV_HEADER: &str =
    "token\tlabel_view\tcount_pos\tcount_neg\tpmi_pos\tlmi_pos\tlmi_neg\teffective_lmi\tz";

pub fn write_score_tsv<W: Write>(mut w: W, view: &str, scores: &[TokenScore]) -> io::Result<()> {
    writeln!(w, "{SCORE_TSV_HEADER}")?;
    for s in scores {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.token, view, s.count_pos, s.count_neg, s.pmi_pos, s.lmi_pos, s.lmi_neg, s.effective_lmi, s.z
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ArticleRegistry, Document, TaskLabels};
    use approx::assert_relative_eq;

    fn doc(id: &str, text: &str, j: bool) -> Document {
        let labels = TaskLabels { j: Some(j), ..Default::default() };
        Document::new(id, vec![text.to_string()], "S", labels, None)
    }

    fn tiny() -> CooccurrenceTable {
        let c = Corpus::new(vec![doc("p", "a a b", true), doc("n", "b c", false)], ArticleRegistry::default())
            .unwrap();
        build_table(&c, LabelView::Outcome, CountMode::Occurrence).unwrap()
    }

    #[test]
    fn counting_example() {
        let t = tiny();
        assert_eq!(t.count("a", true), 2);
        assert_eq!(t.count("b", true), 1);
        assert_eq!(t.count("b", false), 1);
        assert_eq!(t.count("c", false), 1);
        assert_eq!(t.vocab_size(), 3);
        assert_eq!(t.count("zzz", true), 0);
        assert_eq!(t.token_count("zzz"), 0);
    }

    #[test]
    fn lmi_example() {
        let s = lmi(&tiny(), "a", true).unwrap();
        assert_relative_eq!(s.pmi, (5.0f64 / 3.0).ln(), max_relative = 1e-14);
        assert_relative_eq!(s.pmi, 0.5108, epsilon = 1e-4);
        assert_relative_eq!(s.p_ty, 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(s.lmi, 0.3405, epsilon = 1e-4);
    }

    #[test]
    fn zero_count_is_flagged_zero() {
        let s = lmi(&tiny(), "a", false).unwrap();
        assert!(s.zero_count);
        assert_eq!(s.lmi, 0.0);
        assert_eq!(s.pmi, f64::NEG_INFINITY);
    }

    #[test]
    fn balanced_token_has_zero_pmi() {
        let c = Corpus::new(vec![doc("p", "x y", true), doc("n", "x z", false)], ArticleRegistry::default())
            .unwrap();
        let t = build_table(&c, LabelView::Outcome, CountMode::Occurrence).unwrap();
        let s = lmi(&t, "x", true).unwrap();
        assert_eq!(s.pmi, 0.0);
        assert_eq!(s.lmi, 0.0);
        assert_eq!(effective_lmi(&t, "x").unwrap(), 0.0);
    }

    #[test]
    fn contrast_framings() {
        assert_relative_eq!(contrast(0.3, 0.1, Framing::Binary), 0.2, epsilon = 1e-15);
        assert_relative_eq!(contrast(0.1, 0.3, Framing::OneVsRest), -0.2, epsilon = 1e-15);
        assert_relative_eq!(contrast(0.1, 0.3, Framing::OneVsOne), 0.2, epsilon = 1e-15);
        assert_eq!(contrast(0.25, 0.25, Framing::Binary), 0.0);
        assert_eq!(contrast(0.25, 0.25, Framing::OneVsRest), 0.0);
    }

    fn scores(eff: &[f64]) -> Vec<TokenScore> {
        eff.iter()
            .enumerate()
            .map(|(i, &e)| TokenScore {
                token: format!("t{i}"),
                count_pos: 0,
                count_neg: 0,
                pmi_pos: 0.0,
                lmi_pos: 0.0,
                lmi_neg: 0.0,
                effective_lmi: e,
                z: f64::NAN,
            })
            .collect()
    }

    #[test]
    fn z_filter_population_sd() {
        let s = scores(&[1.0, 1.0, 1.0, 1.0, 9.0]);
        let z = z_scores(&[1.0, 1.0, 1.0, 1.0, 9.0]).unwrap();
        assert_relative_eq!(z[4], 2.0, max_relative = 1e-12);
        let kept = zscore_filter(&s, 2.0 - 1e-9);
        assert_eq!(kept.tokens, BTreeSet::from(["t4".to_string()]));
        assert_eq!(zscore_filter(&s, -1e9).tokens.len(), 5);
    }

    #[test]
    fn z_filter_degenerate() {
        let f = zscore_filter(&scores(&[0.5; 4]), 0.0);
        assert!(f.tokens.is_empty());
        assert!(f.warning.is_some());
        assert!(zscore_filter(&scores(&[1.0]), 0.0).warning.is_some());
    }

    #[test]
    fn empty_class_is_an_error() {
        let c = Corpus::new(vec![doc("p", "a", true)], ArticleRegistry::default()).unwrap();
        let err = build_table(&c, LabelView::Outcome, CountMode::Occurrence).unwrap_err();
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn one_vs_one_excludes_unalleged_documents() {
        let mk = |id: &str, text: &str, alleged: &[usize], violated: &[usize]| {
            let labels = TaskLabels {
                j: None,
                alleged: alleged.iter().copied().collect(),
                violated: violated.iter().copied().collect(),
            };
            Document::new(id, vec![text.into()], "S", labels, None)
        };
        let c = Corpus::new(
            vec![mk("a", "v", &[2], &[2]), mk("b", "n", &[2], &[]), mk("c", "other", &[5], &[])],
            ArticleRegistry::default(),
        )
        .unwrap();
        let t = build_table(&c, LabelView::ViolatedGivenAlleged(2), CountMode::Occurrence).unwrap();
        assert_eq!(t.token_count("other"), 0);
        assert_eq!(t.vocab_size(), 2);
        let rest = build_table(&c, LabelView::Violated(2), CountMode::Occurrence).unwrap();
        assert_eq!(rest.count("other", false), 1);
    }

    #[test]
    fn document_mode_counts_once_per_doc() {
        let c = Corpus::new(vec![doc("p", "a a b", true), doc("n", "b c", false)], ArticleRegistry::default())
            .unwrap();
        let t = build_table(&c, LabelView::Outcome, CountMode::Document).unwrap();
        assert_eq!(t.count("a", true), 1);
        assert_eq!(t.label_mass(true), 2);
    }
}
