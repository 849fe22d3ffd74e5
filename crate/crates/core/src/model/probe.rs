use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{encode_corpus, EncodedDoc};
use super::network::{apply_mlp, mlp, ModelBundle};
use super::{Head, ModelError};
use crate::corpus::{derive_length_bins, Corpus};
use crate::diffcore::{Adam, AdamConfig, Graph, ParamStore, Tensor};
use crate::hashing::derive_seed;

/// Targets of a probe, one per feature row.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeTargets {
    Classes { labels: Vec<usize>, n_classes: usize },
    MultiLabel(Vec<Vec<f64>>),
}

impl ProbeTargets {
    fn len(&self) -> usize {
        match self {
            ProbeTargets::Classes { labels, .. } => labels.len(),
            ProbeTargets::MultiLabel(rows) => rows.len(),
        }
    }

    fn width(&self) -> usize {
        match self {
            ProbeTargets::Classes { n_classes, .. } => *n_classes,
            ProbeTargets::MultiLabel(rows) => rows.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Held-out accuracy; mean per-label accuracy for multi-label targets.
    pub accuracy: f64,
    /// Accuracy of always predicting the training majority.
    pub majority_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
}

const PROBE_EPOCHS: usize = 60;
const PROBE_BATCH: usize = 32;
const PROBE_LR: f64 = 3e-3;

/// Trains a fresh one-hidden-layer probe on half of `features` (seeded
/// shuffle) and reports accuracy on the other half.
pub fn probe_on_features(
    features: &[Tensor],
    targets: &ProbeTargets,
    hidden: usize,
    seed: u64,
) -> Result<ProbeResult, ModelError> {
    let n = features.len();
    if n < 2 || targets.len() != n {
        return Err(ModelError::EmptySplit("probe"));
    }
    let width = targets.width();
    if width == 0 {
        return Err(ModelError::Config("probe targets have no classes".into()));
    }
    let dim = features[0].cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let (train, test) = idx.split_at(n / 2);

    let mut store = ParamStore::new();
    let head = mlp(&mut store, "probe", (dim, hidden.max(1), width), &mut rng)?;
    let mut adam = Adam::new(&store, AdamConfig { lr: PROBE_LR, ..AdamConfig::default() });
    let mut order = train.to_vec();
    for epoch in 0..PROBE_EPOCHS {
        order.shuffle(&mut rng);
        for chunk in order.chunks(PROBE_BATCH) {
            let mut g = Graph::new();
            let p = store.bind(&mut g, true);
            let mut total = None;
            for &i in chunk {
                let x = g.constant(features[i].clone());
                let logits = apply_mlp(&mut g, &p, &head, x)?;
                let l = match targets {
                    ProbeTargets::Classes { labels, .. } => g.cross_entropy(logits, &[labels[i]])?,
                    ProbeTargets::MultiLabel(rows) => g.bce_with_logits(logits, Tensor::row_vector(rows[i].clone()))?,
                };
                total = Some(match total {
                    None => l,
                    Some(t) => g.add(t, l)?,
                });
            }
            let Some(total) = total else { continue };
            let loss = g.scale(total, 1.0 / chunk.len() as f64);
            g.backward(loss)?;
            let grads = store.grads(&g, &p);
            drop(g);
            adam.step(&mut store, &grads)?;
        }
        log::trace!("probe epoch {epoch} done");
    }

    let logits = |i: usize| -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x = g.constant(features[i].clone());
        let out = apply_mlp(&mut g, &p, &head, x)?;
        Ok(g.value(out).clone())
    };
    let (accuracy, majority_rate) = match targets {
        ProbeTargets::Classes { labels, n_classes } => {
            let mut counts = vec![0usize; *n_classes];
            for &i in train {
                counts[labels[i]] += 1;
            }
            // Lowest class index wins ties.
            let majority = (0..*n_classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
            let mut correct = 0;
            for &i in test {
                let l = logits(i)?;
                let pred = (0..l.cols())
                    .fold(0, |best, c| if l.get(0, c) > l.get(0, best) { c } else { best });
                correct += usize::from(pred == labels[i]);
            }
            let maj = test.iter().filter(|&&i| labels[i] == majority).count();
            (correct as f64 / test.len() as f64, maj as f64 / test.len() as f64)
        }
        ProbeTargets::MultiLabel(rows) => {
            let mut pos = vec![0usize; width];
            for &i in train {
                for (k, &y) in rows[i].iter().enumerate() {
                    pos[k] += usize::from(y > 0.5);
                }
            }
            let majority: Vec<bool> = pos.iter().map(|&c| 2 * c > train.len()).collect();
            let (mut correct, mut maj) = (0usize, 0usize);
            for &i in test {
                let l = logits(i)?;
                for (k, &y) in rows[i].iter().enumerate() {
                    correct += usize::from((l.get(0, k) > 0.0) == (y > 0.5));
                    maj += usize::from(majority[k] == (y > 0.5));
                }
            }
            let denom = (test.len() * width) as f64;
            (correct as f64 / denom, maj as f64 / denom)
        }
    };
    Ok(ProbeResult { accuracy, majority_rate, n_train: train.len(), n_test: test.len() })
}

/// Freezes the trained feature extractor, computes document vectors for
/// `corpus`, and probes them for confounder `head`.
pub fn discriminator_probe(bundle: &ModelBundle, corpus: &Corpus, head: Head, seed: u64) -> Result<ProbeResult, ModelError> {
    let mut reg = bundle.registries.clone();
    if head == Head::Length && reg.binning.is_none() {
        reg.binning = Some(
            derive_length_bins(corpus, bundle.config.length_bins).map_err(|e| ModelError::Config(e.to_string()))?,
        );
    }
    if head == Head::Vocab && reg.lexicon.is_empty() {
        return Err(ModelError::MissingArtifact { variant: bundle.config.variant, artifact: "a spurious lexicon" });
    }
    let docs: Vec<EncodedDoc> = encode_corpus(corpus, &reg, &bundle.config);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for d in &docs {
        let label = match head {
            Head::Country => d.state,
            Head::Length => d.length_bin,
            Head::Vocab => Some(0),
        };
        let Some(label) = label else { continue };
        features.push(bundle.forward(d)?.doc_vector);
        labels.push(label);
        rows.push(d.vocab_hot.clone());
    }
    let targets = match head {
        Head::Vocab => ProbeTargets::MultiLabel(rows),
        _ => ProbeTargets::Classes { labels, n_classes: reg.n_classes(head) },
    };
    probe_on_features(&features, &targets, bundle.config.disc_hidden, derive_seed(seed, &[head as u64]))
}
