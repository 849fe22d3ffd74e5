use serde::{Deserialize, Serialize};

use crate::corpus::Document;

/// Where a packed token came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRef {
    pub paragraph: usize,
    pub sentence: usize,
    /// Offset within the sentence.
    pub offset: usize,
    pub text: String,
}

/// A run of consecutive sentences (or sentence parts) bounded in length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub tokens: Vec<TokenRef>,
}

impl Packet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Greedy sentence packing.
///
/// Sentences are appended to the current packet while it stays within
/// `max_tokens`; a sentence that does not fit opens a new packet, and a
/// sentence longer than `max_tokens` is cut into `max_tokens`-sized parts.
pub fn pack_sentences(doc: &Document, max_tokens: usize) -> Vec<Packet> {
    assert!(max_tokens >= 1, "max_tokens must be at least 1");
    let mut packets = Vec::new();
    let mut current: Vec<TokenRef> = Vec::new();
    for p in &doc.paragraphs {
        for (s, sentence) in p.sentences.iter().enumerate() {
            let refs: Vec<TokenRef> = sentence
                .iter()
                .enumerate()
                .map(|(offset, t)| TokenRef { paragraph: p.index, sentence: s, offset, text: t.clone() })
                .collect();
            if refs.is_empty() {
                continue;
            }
            if current.len() + refs.len() <= max_tokens {
                current.extend(refs);
                continue;
            }
            if !current.is_empty() {
                packets.push(Packet { tokens: std::mem::take(&mut current) });
            }
            if refs.len() <= max_tokens {
                current = refs;
            } else {
                let mut chunks = refs.chunks(max_tokens).map(<[TokenRef]>::to_vec).collect::<Vec<_>>();
                current = chunks.pop().expect("non-empty sentence");
                packets.extend(chunks.into_iter().map(|tokens| Packet { tokens }));
            }
        }
    }
    if !current.is_empty() {
        packets.push(Packet { tokens: current });
    }
    packets
}
