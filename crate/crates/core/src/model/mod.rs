//! Hierarchical attention classifier with adversarial discriminators.
//!
//! A document is packed into token packets; each packet is pooled by a token
//! attention layer, a bidirectional GRU runs over the packet vectors and a
//! sentence attention layer pools them into the document vector. The
//! classifier and every discriminator read that vector, the discriminators
//! through a gradient-reversal node.

mod encode;
mod flip;
mod network;
mod packing;
mod probe;
mod train;

pub use flip::{injection_flip_rate, FlipReport};
pub use encode::{encode_corpus, Batch, EncodedDoc, Registries, Vocab, UNK};
pub use network::{Forward, HeadLosses, ModelBundle};
pub use packing::{pack_sentences, Packet, TokenRef};
pub use probe::{discriminator_probe, probe_on_features, ProbeResult, ProbeTargets};
pub use train::{evaluate, predict, train, LogRecord, TrainedModel};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::DiffError;
use crate::task::Task;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("variant {variant} requires {artifact}")]
    MissingArtifact { variant: Variant, artifact: &'static str },
    #[error("document {doc_id}: missing {what} target")]
    MissingTarget { doc_id: String, what: &'static str },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at lr={lr} epoch {epoch}: non-finite loss")]
    Diverged { lr: f64, epoch: usize },
    #[error("every learning rate in the grid diverged")]
    AllDiverged,
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

impl ModelError {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ModelError::Config(_)
                | ModelError::MissingArtifact { .. }
                | ModelError::MissingTarget { .. }
                | ModelError::EmptySplit(_)
                | ModelError::Bundle(_)
        )
    }
}

/// Adversarial discriminator heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Respondent state, multi-class.
    Country,
    /// Length bin, multi-class.
    Length,
    /// Presence of each spurious lexicon token, multi-label.
    Vocab,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Country, Head::Length, Head::Vocab];

    pub fn name(self) -> &'static str {
        match self {
            Head::Country => "country",
            Head::Length => "length",
            Head::Vocab => "vocab",
        }
    }
}

impl FromStr for Head {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "country" | "state" => Ok(Head::Country),
            "length" => Ok(Head::Length),
            "vocab" => Ok(Head::Vocab),
            other => Err(format!("unknown head {other:?} (expected country, length or vocab)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "paraRem")]
    ParaRem,
    #[serde(rename = "gradCou")]
    GradCou,
    #[serde(rename = "gradLen")]
    GradLen,
    #[serde(rename = "gradVocab")]
    GradVocab,
    #[serde(rename = "gradAll")]
    GradAll,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Baseline, Variant::ParaRem, Variant::GradCou, Variant::GradLen, Variant::GradVocab, Variant::GradAll];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::ParaRem => "paraRem",
            Variant::GradCou => "gradCou",
            Variant::GradLen => "gradLen",
            Variant::GradVocab => "gradVocab",
            Variant::GradAll => "gradAll",
        }
    }

    /// Active discriminators; depends on nothing but the variant.
    pub fn heads(self) -> &'static [Head] {
        match self {
            Variant::Baseline | Variant::ParaRem => &[],
            Variant::GradCou => &[Head::Country],
            Variant::GradLen => &[Head::Length],
            Variant::GradVocab => &[Head::Vocab],
            Variant::GradAll => &Head::ALL,
        }
    }

    /// Every variant except the baseline trains on text with paragraph
    /// numbers removed.
    pub fn strips_paragraph_numbers(self) -> bool {
        self != Variant::Baseline
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?} (expected baseline, paraRem, gradCou, gradLen, gradVocab or gradAll)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lambdas {
    pub country: f64,
    pub length: f64,
    pub vocab: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas { country: 1.0, length: 1.0, vocab: 1.0 }
    }
}

impl Lambdas {
    pub fn get(&self, head: Head) -> f64 {
        match head {
            Head::Country => self.country,
            Head::Length => self.length,
            Head::Vocab => self.vocab,
        }
    }

    pub fn all(value: f64) -> Self {
        Lambdas { country: value, length: value, vocab: value }
    }
}

/// Full-scale dimensions; the desk preset divides them by `scale`.
const FULL_DIMS: [usize; 6] = [768, 300, 200, 200, 100, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub task: Task,
    pub variant: Variant,
    pub embed_dim: usize,
    pub token_att_dim: usize,
    /// Per direction; the document vector has twice this size.
    pub gru_hidden: usize,
    pub sent_att_dim: usize,
    pub cls_hidden: usize,
    pub disc_hidden: usize,
    pub packet_max_tokens: usize,
    pub dropout: f64,
    pub lambdas: Lambdas,
    pub batch_size: usize,
    pub lr_grid: Vec<f64>,
    /// Learning-rate multiplier for discriminator parameters. A faster
    /// adversary keeps the reversed gradient informative instead of letting
    /// the features outrun a stale discriminator.
    pub disc_lr_scale: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub length_bins: usize,
    /// Divisor applied to the full-scale dimensions by [`ModelConfig::desk`].
    pub scale: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(Task::J, Variant::Baseline, 8)
    }
}

impl ModelConfig {
    /// Full-scale dimensions divided by `scale` (at least 1 each).
    pub fn desk(task: Task, variant: Variant, scale: usize) -> Self {
        let s = scale.max(1);
        let d = FULL_DIMS.map(|x| (x / s).max(1));
        ModelConfig {
            task,
            variant,
            embed_dim: d[0],
            token_att_dim: d[1],
            gru_hidden: d[2],
            sent_att_dim: d[3],
            cls_hidden: d[4],
            disc_hidden: d[5],
            packet_max_tokens: (512 / s).max(1),
            dropout: 0.1,
            lambdas: Lambdas::default(),
            batch_size: if task == Task::J { 8 } else { 16 },
            lr_grid: vec![1e-3, 3e-4],
            disc_lr_scale: 10.0,
            max_epochs: 20,
            patience: 3,
            length_bins: 5,
            scale: s,
            seed: 0,
        }
    }

    pub fn full(task: Task, variant: Variant) -> Self {
        ModelConfig { packet_max_tokens: 512, lr_grid: vec![1e-5, 3e-5], ..ModelConfig::desk(task, variant, 1) }
    }

    pub fn doc_dim(&self) -> usize {
        2 * self.gru_hidden
    }

    /// Classifier input width: the document vector, plus the allegation
    /// multi-hot for the A|B task.
    pub fn classifier_input_dim(&self) -> usize {
        self.doc_dim() + if self.task == Task::AB { crate::corpus::N_ARTICLES } else { 0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("token_att_dim", self.token_att_dim),
            ("gru_hidden", self.gru_hidden),
            ("sent_att_dim", self.sent_att_dim),
            ("cls_hidden", self.cls_hidden),
            ("disc_hidden", self.disc_hidden),
            ("packet_max_tokens", self.packet_max_tokens),
            ("batch_size", self.batch_size),
            ("length_bins", self.length_bins),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        for h in Head::ALL {
            let l = self.lambdas.get(h);
            if !(l >= 0.0 && l.is_finite()) {
                return Err(ModelError::Config(format!("lambda for {} must be a finite value >= 0", h.name())));
            }
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(ModelError::Config("lr_grid must hold positive learning rates".into()));
        }
        if !(self.disc_lr_scale > 0.0 && self.disc_lr_scale.is_finite()) {
            return Err(ModelError::Config("disc_lr_scale must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_preset_dimensions() {
        let j = ModelConfig::full(Task::J, Variant::GradAll);
        assert_eq!(
            (j.embed_dim, j.token_att_dim, j.gru_hidden, j.sent_att_dim, j.cls_hidden, j.disc_hidden),
            (768, 300, 200, 200, 100, 100)
        );
        assert_eq!(j.doc_dim(), 400);
        assert_eq!(j.dropout, 0.1);
        assert_eq!(j.batch_size, 8);
        assert_eq!(ModelConfig::full(Task::B, Variant::Baseline).batch_size, 16);
        assert_eq!(ModelConfig::full(Task::AB, Variant::Baseline).classifier_input_dim(), 410);
    }

    #[test]
    fn desk_preset_divides_by_scale() {
        let c = ModelConfig::desk(Task::A, Variant::Baseline, 8);
        assert_eq!((c.embed_dim, c.token_att_dim, c.gru_hidden, c.cls_hidden), (96, 37, 25, 12));
        c.validate().unwrap();
    }

    #[test]
    fn heads_follow_variant() {
        assert!(Variant::Baseline.heads().is_empty());
        assert!(Variant::ParaRem.heads().is_empty());
        assert_eq!(Variant::GradCou.heads(), &[Head::Country]);
        assert_eq!(Variant::GradAll.heads().len(), 3);
        assert_eq!("gradall".parse::<Variant>().unwrap(), Variant::GradAll);
        assert!(!Variant::Baseline.strips_paragraph_numbers());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = ModelConfig::default();
        assert!(ModelConfig { gru_hidden: 0, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { lr_grid: vec![], ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { lambdas: Lambdas::all(-1.0), ..ok }.validate().is_err());
    }
}
