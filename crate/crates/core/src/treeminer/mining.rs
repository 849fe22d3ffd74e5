use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::tree::{train_tree, DecisionTree, FeatureMatrix};
use super::MiningError;
use crate::corpus::Corpus;
use crate::evalmetrics::binary_macro_f1;
use crate::exec::Exec;
use crate::stats::{build_table, score_tokens, zscore_filter, CountMode, TokenScore};
use crate::task::{LabelView, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineConfig {
    pub max_iters: usize,
    pub depth: usize,
    pub z_min: f64,
    pub count_mode: CountMode,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig { max_iters: 10, depth: 3, z_min: 2.0, count_mode: CountMode::Occurrence }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// 1-based.
    pub index: usize,
    pub tree: DecisionTree,
    pub tokens: Vec<String>,
    /// Training-set accuracy of the tree.
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningRun {
    pub view: LabelView,
    pub view_name: String,
    pub iterations: Vec<Iteration>,
    pub removed: BTreeSet<String>,
    /// Candidate vocabulary after the LMI z-score filter.
    pub lmi_prefilter: BTreeSet<String>,
    /// Effective-LMI z-score of every candidate.
    pub z: BTreeMap<String, f64>,
    /// Full score table the filter was applied to.
    #[serde(skip)]
    pub scores: Vec<TokenScore>,
}

impl MiningRun {
    /// `(token, iteration)` in extraction order.
    pub fn extracted(&self) -> impl Iterator<Item = (&str, usize)> {
        self.iterations.iter().flat_map(|it| it.tokens.iter().map(move |t| (t.as_str(), it.index)))
    }
}

/// Iterated tree mining over the documents of `corpus` labeled by `view`.
///
/// The candidate vocabulary is filtered once by effective-LMI z-score. Each
/// iteration trains a tree on token presence, records its training metrics,
/// and removes every token used in the tree from the feature set.
pub fn mine_candidates(corpus: &Corpus, view: LabelView, cfg: &MineConfig) -> Result<MiningRun, MiningError> {
    let table = build_table(corpus, view, cfg.count_mode)?;
    let scores = score_tokens(&table);
    let filter = zscore_filter(&scores, cfg.z_min);
    let view_name = table.view.clone();
    if filter.tokens.is_empty() {
        return Err(MiningError::EmptyCandidates(view_name));
    }
    let z: BTreeMap<String, f64> = scores
        .iter()
        .filter(|s| filter.tokens.contains(&s.token))
        .map(|s| (s.token.clone(), s.z))
        .collect();

    let docs: Vec<(HashSet<&str>, bool)> = corpus
        .docs
        .iter()
        .filter_map(|d| view.label(d).map(|y| (d.tokens().collect(), y)))
        .collect();
    let labels: Vec<bool> = docs.iter().map(|(_, y)| *y).collect();
    let tokens: Vec<String> = filter.tokens.iter().cloned().collect();
    let columns = tokens.iter().map(|t| docs.iter().map(|(set, _)| set.contains(t.as_str())).collect()).collect();
    let mut features = FeatureMatrix::from_columns(tokens, columns, docs.len());

    let mut run = MiningRun {
        view,
        view_name,
        iterations: Vec::new(),
        removed: BTreeSet::new(),
        lmi_prefilter: filter.tokens,
        z,
        scores,
    };
    for index in 1..=cfg.max_iters {
        if features.tokens().is_empty() {
            break;
        }
        let tree = train_tree(&features, &labels, cfg.depth)?;
        let extracted = tree.tokens();
        if extracted.is_empty() {
            break;
        }
        let pred: Vec<bool> = (0..labels.len()).map(|r| tree.predict_row(&features, r)).collect();
        let correct = pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
        let accuracy = correct as f64 / labels.len() as f64;
        let macro_f1 = binary_macro_f1(&pred, &labels);
        log::debug!("{} iteration {index}: acc={accuracy:.4} tokens={extracted:?}", run.view_name);

        let newly: BTreeSet<String> = extracted.iter().cloned().collect();
        features = features.without(&newly);
        run.removed.extend(newly);
        run.iterations.push(Iteration { index, tree, tokens: extracted, accuracy, macro_f1 });
    }
    Ok(run)
}

/// Mines every view of `task`. Views are independent and run through `exec`;
/// results come back in view (article) order.
pub fn mine_task(
    corpus: &Corpus,
    task: Task,
    cfg: &MineConfig,
    exec: Exec,
) -> Vec<(LabelView, Result<MiningRun, MiningError>)> {
    let views = task.views();
    let runs = exec.map(&views, |&v| mine_candidates(corpus, v, cfg));
    views.into_iter().zip(runs).collect()
}
