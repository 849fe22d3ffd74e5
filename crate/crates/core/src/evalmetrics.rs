//! Prediction metrics (macro/micro/hard-macro F1) and the paired t-test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::Task;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty evaluation set")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} gold rows")]
    LengthMismatch(usize, usize),
    #[error("row {row} has {got} labels, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// F1 of the positive class. Zero predicted and zero gold positives give
    /// `(0.0, true)`.
    pub fn f1(&self) -> (f64, bool) {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp + self.fp == 0 && self.tp + self.fn_ == 0 {
            return (0.0, true);
        }
        (2.0 * self.tp as f64 / denom as f64, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelF1 {
    pub label: String,
    pub f1: f64,
    pub confusion: Confusion,
    pub zero_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_label: Vec<LabelF1>,
}

fn check_shape(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<usize, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gold.len()));
    }
    let Some(first) = gold.first() else { return Err(MetricsError::Empty) };
    let width = first.len();
    for (row, (p, g)) in pred.iter().zip(gold).enumerate() {
        for got in [p.len(), g.len()] {
            if got != width {
                return Err(MetricsError::Width { row, got, expected: width });
            }
        }
    }
    Ok(width)
}

fn report(confusions: Vec<(String, Confusion)>) -> F1Report {
    let mut pooled = Confusion::default();
    let per_label: Vec<LabelF1> = confusions
        .into_iter()
        .map(|(label, c)| {
            pooled.tp += c.tp;
            pooled.fp += c.fp;
            pooled.fn_ += c.fn_;
            pooled.tn += c.tn;
            let (f1, zero_support) = c.f1();
            LabelF1 { label, f1, confusion: c, zero_support }
        })
        .collect();
    let macro_f1 = per_label.iter().map(|l| l.f1).sum::<f64>() / per_label.len() as f64;
    F1Report { macro_f1, micro_f1: pooled.f1().0, per_label }
}

/// Per-label F1, macro (mean over labels) and micro (pooled counts).
pub fn multilabel_f1(pred: &[Vec<bool>], gold: &[Vec<bool>], names: &[String]) -> Result<F1Report, MetricsError> {
    let width = check_shape(pred, gold)?;
    let confusions = (0..width)
        .map(|j| {
            let mut c = Confusion::default();
            for (p, g) in pred.iter().zip(gold) {
                c.add(p[j], g[j]);
            }
            (names.get(j).cloned().unwrap_or_else(|| j.to_string()), c)
        })
        .collect();
    Ok(report(confusions))
}

/// Task-aware F1: for task J the two classes (violation, non-violation) are
/// the labels; otherwise each article is a label.
pub fn task_f1(pred: &[Vec<bool>], gold: &[Vec<bool>], task: Task, names: &[String]) -> Result<F1Report, MetricsError> {
    match task {
        Task::J => {
            check_shape(pred, gold)?;
            let mut pos = Confusion::default();
            let mut neg = Confusion::default();
            for (p, g) in pred.iter().zip(gold) {
                pos.add(p[0], g[0]);
                neg.add(!p[0], !g[0]);
            }
            Ok(report(vec![("violation".into(), pos), ("non-violation".into(), neg)]))
        }
        _ => multilabel_f1(pred, gold, names),
    }
}

/// Macro F1 over the two classes of a binary problem.
pub fn binary_macro_f1(pred: &[bool], gold: &[bool]) -> f64 {
    let mut pos = Confusion::default();
    let mut neg = Confusion::default();
    for (&p, &g) in pred.iter().zip(gold) {
        pos.add(p, g);
        neg.add(!p, !g);
    }
    (pos.f1().0 + neg.f1().0) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardF1Report {
    pub hard_macro_f1: f64,
    /// `None` for articles without any alleged or violated instance.
    pub per_article: Vec<Option<LabelF1>>,
    pub excluded: Vec<String>,
}

/// Per-article F1 whose negatives are only the documents where the article
/// was alleged but not found violated. Documents that neither allege nor
/// violate an article do not enter its confusion.
pub fn hard_macro_f1(
    pred: &[Vec<bool>],
    gold: &[Vec<bool>],
    alleged: &[Vec<bool>],
    names: &[String],
) -> Result<HardF1Report, MetricsError> {
    let width = check_shape(pred, gold)?;
    check_shape(alleged, gold)?;
    let mut per_article = Vec::with_capacity(width);
    let mut excluded = Vec::new();
    let mut sum = 0.0;
    let mut counted = 0usize;
    for j in 0..width {
        let name = names.get(j).cloned().unwrap_or_else(|| j.to_string());
        if !alleged.iter().any(|a| a[j]) {
            excluded.push(name);
            per_article.push(None);
            continue;
        }
        let mut c = Confusion::default();
        for ((p, g), a) in pred.iter().zip(gold).zip(alleged) {
            if g[j] || a[j] {
                c.add(p[j], g[j]);
            }
        }
        let (f1, zero_support) = c.f1();
        sum += f1;
        counted += 1;
        per_article.push(Some(LabelF1 { label: name, f1, confusion: c, zero_support }));
    }
    if counted == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(HardF1Report { hard_macro_f1: sum / counted as f64, per_article, excluded })
}

// ---------------------------------------------------------------------------
// Paired t-test

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Zero variance of the differences with a nonzero mean.
    pub degenerate: bool,
}

/// Paired two-sided t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, df, p: 1.0, degenerate: false }
        } else {
            TTest { t: mean.signum() * f64::INFINITY, df, p: 0.0, degenerate: true }
        });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    Ok(TTest { t, df, p: student_t_two_sided_p(t, df), degenerate: false })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub mean_p_at_oracle: f64,
    pub se: f64,
    /// Paired t-test p-value against the reference variant, when compared.
    pub p_vs_reference: Option<f64>,
}

/// Metrics report written by the `eval` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub variant: String,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub hard_macro_f1: Option<f64>,
    pub per_article: BTreeMap<String, f64>,
    pub alignment: Option<AlignmentSummary>,
}
