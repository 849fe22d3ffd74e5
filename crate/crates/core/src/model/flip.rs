use serde::{Deserialize, Serialize};

use super::encode::encode_corpus;
use super::{ModelBundle, ModelError};
use crate::corpus::Corpus;
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub token: String,
    /// Positive documents predicted positive that did not already contain the token.
    pub eligible: usize,
    pub flipped: usize,
    pub rate: f64,
    pub flipped_ids: Vec<String>,
}

/// Injects `token` at the start of the introductory paragraph of every
/// held-out positive document the model already classifies as positive, and
/// counts how many predictions flip to negative. Task J only.
pub fn injection_flip_rate(bundle: &ModelBundle, corpus: &Corpus, token: &str) -> Result<FlipReport, ModelError> {
    if bundle.task() != Task::J {
        return Err(ModelError::Config(format!("flip analysis needs task J, model is {}", bundle.task())));
    }
    let positives: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.docs[i].labels.j == Some(true) && !corpus.docs[i].contains_token(token))
        .collect();
    let original = corpus.subset(&positives);
    let injected = Corpus {
        docs: original.docs.iter().map(|d| d.with_token_injected(token, 0)).collect(),
        registry: original.registry.clone(),
    };
    let before = encode_corpus(&original, &bundle.registries, &bundle.config);
    let after = encode_corpus(&injected, &bundle.registries, &bundle.config);
    let (mut eligible, mut flipped_ids) = (0, Vec::new());
    for (b, a) in before.iter().zip(&after) {
        if bundle.forward(b)?.logits.get(0, 0) <= 0.0 {
            continue;
        }
        eligible += 1;
        if bundle.forward(a)?.logits.get(0, 0) <= 0.0 {
            flipped_ids.push(a.doc_id.clone());
        }
    }
    let flipped = flipped_ids.len();
    let rate = if eligible == 0 { 0.0 } else { flipped as f64 / eligible as f64 };
    Ok(FlipReport { token: token.to_string(), eligible, flipped, rate, flipped_ids })
}
