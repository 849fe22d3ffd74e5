use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};

/// Equal-frequency bins over document length in sentences.
///
/// `edges` are inclusive upper bounds: a length `n` falls in bin `i` where `i`
/// is the number of edges strictly below `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBinning {
    pub edges: Vec<usize>,
    pub n_bins: usize,
    /// Set when fewer bins than requested could be formed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl LengthBinning {
    pub fn from_edges(edges: Vec<usize>) -> Result<Self, CorpusError> {
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CorpusError::Invalid(format!("bin edges not strictly increasing: {edges:?}")));
        }
        let n_bins = edges.len() + 1;
        Ok(LengthBinning { edges, n_bins, warning: None })
    }

    pub fn bin(&self, n_sentences: usize) -> usize {
        self.edges.partition_point(|&e| e < n_sentences)
    }
}

/// Quantile bin edges over the `n_sentences` of every document in `corpus`
/// (pass the training split). Ties collapse; the resulting bin count is
/// reported through `n_bins` and `warning`.
pub fn derive_length_bins(corpus: &Corpus, n_bins: usize) -> Result<LengthBinning, CorpusError> {
    if n_bins < 2 {
        return Err(CorpusError::Invalid(format!("n_bins must be at least 2, got {n_bins}")));
    }
    if corpus.is_empty() {
        return Err(CorpusError::Invalid("cannot bin an empty corpus".into()));
    }
    let mut lengths: Vec<usize> = corpus.docs.iter().map(|d| d.n_sentences).collect();
    lengths.sort_unstable();
    Ok(quantile_edges(&lengths, n_bins))
}

pub(crate) fn quantile_edges(sorted: &[usize], n_bins: usize) -> LengthBinning {
    let n = sorted.len();
    let max = *sorted.last().expect("nonempty");
    let mut edges: Vec<usize> = Vec::with_capacity(n_bins - 1);
    for i in 1..n_bins {
        let rank = (i * n).div_ceil(n_bins);
        let e = sorted[rank.max(1) - 1];
        // An edge at the maximum would leave the top bin empty.
        if e < max && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    let actual = edges.len() + 1;
    let warning = (actual < n_bins).then(|| {
        format!("requested {n_bins} length bins but ties leave only {actual}")
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    LengthBinning { edges, n_bins: actual, warning }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: for every candidate cut value, count how many lengths
    /// fall at or below it, and pick the smallest value reaching each
    /// quantile rank.
    fn brute_edges(lengths: &[usize], n_bins: usize) -> Vec<usize> {
        let n = lengths.len();
        let mut values: Vec<usize> = lengths.to_vec();
        values.sort();
        values.dedup();
        let max = *values.last().unwrap();
        let mut edges = Vec::new();
        for i in 1..n_bins {
            let target = (i * n) as f64 / n_bins as f64;
            let v = values
                .iter()
                .copied()
                .find(|&v| lengths.iter().filter(|&&l| l <= v).count() as f64 >= target)
                .unwrap();
            if v < max && edges.last().is_none_or(|&l| v > l) {
                edges.push(v);
            }
        }
        edges
    }

    #[test]
    fn deciles_of_one_to_hundred() {
        let lengths: Vec<usize> = (1..=100).collect();
        let b = quantile_edges(&lengths, 10);
        assert_eq!(b.edges, brute_edges(&lengths, 10));
        assert_eq!(b.edges, vec![10, 20, 30, 40, 50, 60, 70, 80, 90]);
        let mut per_bin = vec![0; b.n_bins];
        for &l in &lengths {
            per_bin[b.bin(l)] += 1;
        }
        assert_eq!(per_bin, vec![10; 10]);
    }

    #[test]
    fn four_lengths_two_bins() {
        let b = quantile_edges(&[1, 2, 3, 4], 2);
        assert_eq!(b.edges, vec![2]);
        assert_eq!([1, 2, 3, 4].map(|l| b.bin(l)), [0, 0, 1, 1]);
    }

    #[test]
    fn identical_lengths_collapse() {
        let b = quantile_edges(&[5; 20], 4);
        assert_eq!(b.n_bins, 1);
        assert!(b.edges.is_empty());
        assert!(b.warning.is_some());
        assert_eq!(b.bin(5), 0);
    }

    #[test]
    fn matches_brute_force_on_skewed_samples() {
        let samples: [&[usize]; 4] = [
            &[1, 1, 1, 2, 2, 3, 9, 9, 9, 9, 12],
            &[3, 3, 3, 3, 4],
            &[2, 4, 6, 8, 10, 12, 14],
            &[1, 2, 2, 2, 2, 2, 2, 2, 7, 8],
        ];
        for s in samples {
            for k in 2..6 {
                let mut sorted = s.to_vec();
                sorted.sort();
                let b = quantile_edges(&sorted, k);
                assert_eq!(b.edges, brute_edges(s, k), "{s:?} k={k}");
                assert!(s.iter().all(|&l| b.bin(l) < b.n_bins));
            }
        }
    }

    #[test]
    fn rejects_too_few_bins() {
        let c = Corpus { docs: vec![], registry: Default::default() };
        assert!(derive_length_bins(&c, 1).is_err());
        assert!(derive_length_bins(&c, 3).is_err());
    }
}
