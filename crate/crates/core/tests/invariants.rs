use std::collections::BTreeSet;

use deconf::attribution::random_ranking_precision;
use deconf::corpus::{parse_corpus, split_corpus, synthesize_corpus, tokenize, Corpus, SynthSpec};
use deconf::exec::Exec;
use deconf::model::pack_sentences;
use deconf::stats::z_scores;
use proptest::prelude::*;

fn small_corpus(seed: u64, n: usize) -> Corpus {
    synthesize_corpus(&SynthSpec { n_docs: n, seed, state_skew: 0.5, length_gap: 1, ..Default::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tokenize_is_idempotent(text in "[ -~]{0,80}") {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn packing_preserves_token_order(seed in 0u64..1000, max in 1usize..40) {
        let c = small_corpus(seed, 2);
        for d in &c.docs {
            let packets = pack_sentences(d, max);
            prop_assert!(packets.iter().all(|p| !p.is_empty() && p.len() <= max));
            let packed: Vec<&str> = packets.iter().flat_map(|p| p.tokens.iter().map(|t| t.text.as_str())).collect();
            let plain: Vec<&str> = d.tokens().collect();
            prop_assert_eq!(packed, plain);
        }
    }

    #[test]
    fn z_scores_are_standardized(values in prop::collection::vec(-1e3f64..1e3, 2..50)) {
        if let Some(z) = z_scores(&values) {
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn splits_partition_the_corpus(seed in any::<u64>(), n in 1usize..60, tf in 0.0f64..0.7) {
        let c = small_corpus(3, n);
        let s = split_corpus(&c, tf, 0.2, seed).unwrap();
        let mut all: Vec<usize> = [s.train.clone(), s.dev.clone(), s.test.clone()].concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.clone(), split_corpus(&c, tf, 0.2, seed).unwrap());
    }

    #[test]
    fn exec_strategies_agree(items in prop::collection::vec(any::<i64>(), 0..200), threads in 0usize..4) {
        let f = |x: &i64| x.wrapping_mul(31).rotate_left(7);
        prop_assert_eq!(Exec::Sequential.map(&items, f), Exec::Parallel { threads }.map(&items, f));
    }

    #[test]
    fn random_baseline_ignores_exec(n in 1usize..12, g_seed in any::<usize>(), seed in any::<u64>()) {
        let g = 1 + g_seed % n;
        let a = random_ranking_precision(n, g, 25_000, seed, Exec::Sequential).unwrap();
        let b = random_ranking_precision(n, g, 25_000, seed, Exec::Parallel { threads: 0 }).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn jsonl_round_trip_preserves_content() {
    let c = small_corpus(11, 40);
    let text = c.to_jsonl_lines().join("\n");
    let back = parse_corpus(&text, &c.registry).unwrap();
    assert_eq!(back.content_hash(), c.content_hash());
    assert_eq!(back.docs, c.docs);
}

#[test]
fn injected_token_lands_after_the_paragraph_number() {
    let c = small_corpus(5, 3);
    let d = &c.docs[0];
    let injected = d.with_token_injected("represented", 0);
    assert!(injected.paragraphs[0].raw_text.starts_with("1. represented "), "{}", injected.paragraphs[0].raw_text);
    assert!(injected.contains_token("represented"));
    assert_eq!(injected.n_tokens(), d.n_tokens() + 1);
    let stripped = deconf::corpus::strip_paragraph_numbers(&injected);
    assert_eq!(stripped.paragraphs[0].tokens().next(), Some("represented"));
}

#[test]
fn gold_rationales_point_at_body_paragraphs() {
    let c = small_corpus(8, 50);
    for d in &c.docs {
        let gold: &BTreeSet<usize> = d.gold_rationale.as_ref().unwrap();
        assert!(!gold.is_empty() && gold.len() <= 3);
        assert!(!gold.contains(&0));
        assert!(gold.iter().all(|&p| p < d.paragraphs.len()));
    }
}
