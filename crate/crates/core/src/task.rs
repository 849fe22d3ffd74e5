//! Prediction tasks and the binary label views derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, N_ARTICLES};

/// The four outcome-prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    /// Binary violation outcome.
    J,
    /// Violated articles.
    A,
    /// Allegedly violated articles.
    B,
    /// Violated articles given the alleged ones.
    AB,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::J, Task::A, Task::B, Task::AB];

    pub fn n_outputs(self) -> usize {
        match self {
            Task::J => 1,
            _ => N_ARTICLES,
        }
    }

    /// Main-task target vector, or `None` when the document has no label for
    /// this task.
    pub fn targets(self, doc: &Document) -> Option<Vec<bool>> {
        match self {
            Task::J => doc.labels.j.map(|j| vec![j]),
            Task::A | Task::AB => Some((0..N_ARTICLES).map(|a| doc.labels.violated.contains(&a)).collect()),
            Task::B => Some((0..N_ARTICLES).map(|a| doc.labels.alleged.contains(&a)).collect()),
        }
    }

    /// Binary views used for co-occurrence statistics and tree mining.
    pub fn views(self) -> Vec<LabelView> {
        match self {
            Task::J => vec![LabelView::Outcome],
            Task::A => (0..N_ARTICLES).map(LabelView::Violated).collect(),
            Task::B => (0..N_ARTICLES).map(LabelView::Alleged).collect(),
            Task::AB => (0..N_ARTICLES).map(LabelView::ViolatedGivenAlleged).collect(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::J => "J",
            Task::A => "A",
            Task::B => "B",
            Task::AB => "AB",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "J" => Ok(Task::J),
            "A" => Ok(Task::A),
            "B" => Ok(Task::B),
            "AB" | "A|B" => Ok(Task::AB),
            other => Err(format!("unknown task {other:?} (expected J, A, B or AB)")),
        }
    }
}

/// How the positive/negative LMI scores of a view are contrasted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Framing {
    Binary,
    OneVsRest,
    OneVsOne,
}

/// A binary labeling of (a subset of) the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelView {
    /// Task J outcome.
    Outcome,
    /// One-vs-rest: article violated (task A).
    Violated(usize),
    /// One-vs-rest: article alleged (task B).
    Alleged(usize),
    /// One-vs-one: violated vs alleged-but-not-violated; documents that
    /// never allege the article are outside the view.
    ViolatedGivenAlleged(usize),
}

impl LabelView {
    pub fn label(&self, doc: &Document) -> Option<bool> {
        match *self {
            LabelView::Outcome => doc.labels.j,
            LabelView::Violated(a) => Some(doc.labels.violated.contains(&a)),
            LabelView::Alleged(a) => Some(doc.labels.alleged.contains(&a)),
            LabelView::ViolatedGivenAlleged(a) => {
                doc.labels.alleged.contains(&a).then(|| doc.labels.violated.contains(&a))
            }
        }
    }

    pub fn framing(&self) -> Framing {
        match self {
            LabelView::Outcome => Framing::Binary,
            LabelView::Violated(_) | LabelView::Alleged(_) => Framing::OneVsRest,
            LabelView::ViolatedGivenAlleged(_) => Framing::OneVsOne,
        }
    }

    pub fn article(&self) -> Option<usize> {
        match *self {
            LabelView::Outcome => None,
            LabelView::Violated(a) | LabelView::Alleged(a) | LabelView::ViolatedGivenAlleged(a) => Some(a),
        }
    }

    /// Stable display name, e.g. `J`, `A:art3`, `AB:art6`.
    pub fn name(&self, corpus: &Corpus) -> String {
        let art = |a: usize| corpus.registry.id(a).to_string();
        match *self {
            LabelView::Outcome => "J".into(),
            LabelView::Violated(a) => format!("A:art{}", art(a)),
            LabelView::Alleged(a) => format!("B:art{}", art(a)),
            LabelView::ViolatedGivenAlleged(a) => format!("AB:art{}", art(a)),
        }
    }
}
