mod common;

use std::collections::BTreeSet;

use common::*;
use deconf::attribution::{precision_at_k, rank_paragraphs};
use deconf::evalmetrics::{
    hard_macro_f1, ln_gamma, multilabel_f1, paired_t_test, regularized_incomplete_beta, student_t_two_sided_p, task_f1,
};
use deconf::stats::{build_table, lmi, CountMode};
use deconf::task::{LabelView, Task};
use deconf::treeminer::{train_tree, FeatureMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::{beta, gamma};

fn docs_strategy() -> impl Strategy<Value = Vec<MiniDoc>> {
    any::<u64>().prop_map(|seed| random_docs(&mut ChaCha8Rng::seed_from_u64(seed), 8))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lmi_matches_brute_force(docs in docs_strategy(), per_doc in any::<bool>()) {
        let mode = if per_doc { CountMode::Document } else { CountMode::Occurrence };
        let table = build_table(&corpus_of(&docs), LabelView::Outcome, mode).unwrap();
        for t in table.tokens().map(String::from).collect::<Vec<_>>() {
            for y in [false, true] {
                let got = lmi(&table, &t, y).unwrap();
                let (pmi, l) = lmi_brute(&docs, &t, y, per_doc);
                prop_assert!(rel_err(got.lmi, l) <= 1e-12, "{t} {y}: {} vs {l}", got.lmi);
                prop_assert_eq!(got.pmi.is_infinite(), pmi.is_infinite());
                if pmi.is_finite() {
                    prop_assert!(rel_err(got.pmi, pmi) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn tree_matches_brute_force(docs in docs_strategy(), depth in 0usize..=3) {
        let (vocab, rows) = presence(&docs);
        let labels: Vec<bool> = docs.iter().map(|d| d.label).collect();
        let tree = train_tree(&FeatureMatrix::from_rows(vocab.clone(), &rows), &labels, depth).unwrap();
        prop_assert_eq!(nested(&tree), tree_brute(&vocab, &rows, &labels, depth));
    }

    #[test]
    fn f1_family_matches_brute_force(seed in any::<u64>(), n in 1usize..12, w in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = random_matrix(&mut rng, n, w, 0.4);
        let gold = random_matrix(&mut rng, n, w, 0.4);
        let alleged = random_matrix(&mut rng, n, w, 0.5);
        let r = multilabel_f1(&pred, &gold, &[]).unwrap();
        let (ma, mi) = macro_micro_brute(&pred, &gold);
        prop_assert_eq!((r.macro_f1, r.micro_f1), (ma, mi));

        match (hard_macro_f1(&pred, &gold, &alleged, &[]), hard_macro_brute(&pred, &gold, &alleged)) {
            (Ok(h), Some(b)) => prop_assert_eq!(h.hard_macro_f1, b),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
        }

        let p1: Vec<Vec<bool>> = pred.iter().map(|r| vec![r[0]]).collect();
        let g1: Vec<Vec<bool>> = gold.iter().map(|r| vec![r[0]]).collect();
        let neg = |m: &[Vec<bool>]| m.iter().map(|r| !r[0]).collect::<Vec<_>>();
        let j = task_f1(&p1, &g1, Task::J, &[]).unwrap();
        let pos = f1_brute(&column0(&p1), &column0(&g1));
        prop_assert_eq!(j.macro_f1, (pos + f1_brute(&neg(&p1), &neg(&g1))) / 2.0);
    }

    #[test]
    fn precision_at_k_matches_brute_force(
        scores in prop::collection::vec(0u8..4, 1..10),
        gold_bits in prop::collection::vec(any::<bool>(), 10),
        k_seed in any::<usize>(),
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let n = scores.len();
        let gold: BTreeSet<usize> = (0..n).filter(|&i| gold_bits[i]).collect();
        prop_assume!(!gold.is_empty());
        let k = 1 + k_seed % n;
        let got = precision_at_k(&rank_paragraphs(&scores), &gold, k).unwrap();
        prop_assert_eq!(got, precision_at_k_brute(&scores, &gold, k));
    }

    #[test]
    fn t_distribution_matches_statrs(t in -8.0f64..8.0, df in 1.0f64..60.0) {
        let reference = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
        prop_assert!((student_t_two_sided_p(t, df) - reference).abs() < 1e-9);
    }

    #[test]
    fn special_functions_match_statrs(x in 0.01f64..0.99, a in 0.1f64..30.0, b in 0.1f64..30.0) {
        prop_assert!((regularized_incomplete_beta(x, a, b) - beta::beta_reg(a, b, x)).abs() < 1e-10);
        prop_assert!(rel_err(ln_gamma(a), gamma::ln_gamma(a)) < 1e-10);
    }
}

fn column0(m: &[Vec<bool>]) -> Vec<bool> {
    m.iter().map(|r| r[0]).collect()
}

#[test]
fn paired_t_test_matches_statrs() {
    let a = [0.8, 0.9, 0.75, 0.6, 1.0, 0.85, 0.7];
    let b = [0.5, 0.9, 0.55, 0.65, 0.7, 0.6, 0.5];
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t.abs()));
    let got = paired_t_test(&a, &b).unwrap();
    assert!((got.t - t).abs() < 1e-12);
    assert!((got.p - p).abs() < 1e-9, "{} vs {p}", got.p);
}
