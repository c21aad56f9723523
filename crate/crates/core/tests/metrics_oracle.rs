mod common;

use ehrqa::metrics::{
    bleu, corpus_bleu, micro_prf, rouge_lsum, rouge_lsum_scores, sari, BleuStats,
};
use proptest::prelude::*;
use std::collections::HashSet;

const TOL: f64 = 1e-6;

#[test]
fn bleu_matches_oracle_on_fixture() {
    for (s, c, r) in common::TRIPLES {
        for (cand, refs) in [(c, vec![r]), (c, vec![r, s]), (s, vec![r])] {
            let got = bleu(cand, &refs);
            let want = common::bleu(cand, &refs);
            assert!(
                (got - want).abs() < TOL,
                "{cand:?} vs {refs:?}: {got} != {want}"
            );
        }
    }
}

#[test]
fn bleu_hand_case() {
    // "the cat sat" vs "the cat sat down": precisions 1, 1, 1; bp = exp(1 - 4/3)
    let want = (1.0f64 - 4.0 / 3.0).exp();
    assert!((bleu("the cat sat", &["the cat sat down"]) - want).abs() < 1e-12);
    assert!((common::bleu("the cat sat", &["the cat sat down"]) - want).abs() < 1e-12);
}

#[test]
fn rouge_matches_oracle_on_fixture() {
    for (_, c, r) in common::TRIPLES {
        for (cand, reference) in [(c, r), (r, c)] {
            let got = rouge_lsum(cand, reference);
            let want = common::rouge_lsum(cand, reference);
            assert!(
                (got - want).abs() < TOL,
                "{cand:?} vs {reference:?}: {got} != {want}"
            );
        }
    }
}

#[test]
fn rouge_hand_case() {
    let s = rouge_lsum_scores("the cat", "the cat sat");
    assert_eq!((s.precision, s.recall), (1.0, 2.0 / 3.0));
    assert!((s.fmeasure - 0.8).abs() < 1e-12);
}

#[test]
fn sari_matches_oracle_on_fixture() {
    for (s, c, r) in common::TRIPLES {
        for refs in [vec![r], vec![r, c]] {
            let got = sari(s, c, &refs);
            let want = common::sari(s, c, &refs);
            assert!(
                (got - want).abs() < TOL,
                "{s:?} -> {c:?} vs {refs:?}: {got} != {want}"
            );
        }
    }
}

#[test]
fn identity_is_maximal() {
    for (_, _, r) in common::TRIPLES {
        assert!((bleu(r, &[r]) - 1.0).abs() < 1e-12, "{r}");
        assert!((rouge_lsum(r, r) - 1.0).abs() < 1e-12, "{r}");
        assert!((sari(r, r, &[r]) - 1.0).abs() < 1e-12, "{r}");
    }
}

#[test]
fn corpus_bleu_pools_statistics() {
    let pairs: Vec<(&str, Vec<&str>)> = common::TRIPLES
        .iter()
        .map(|(_, c, r)| (*c, vec![*r]))
        .collect();
    let mut total = BleuStats::default();
    for (c, r) in &pairs {
        total.add(&BleuStats::compute(c, r));
    }
    assert_eq!(corpus_bleu(pairs.clone()), total.score());
    // a corpus of one is the sentence score
    assert_eq!(
        corpus_bleu(vec![pairs[0].clone()]),
        bleu(pairs[0].0, &pairs[0].1)
    );
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "the", "cat", "sat", "on", "mat", "a", "dog", "ran", "fever", "was",
        ]),
        1..9,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_agree_with_oracles_on_random_text(s in sentence(), c in sentence(), r in sentence()) {
        prop_assert!((bleu(&c, &[&r]) - common::bleu(&c, &[&r])).abs() < TOL);
        prop_assert!((sari(&s, &c, &[&r]) - common::sari(&s, &c, &[&r])).abs() < TOL);
        for v in [bleu(&c, &[&r]), rouge_lsum(&c, &r), sari(&s, &c, &[&r])] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn micro_prf_is_permutation_invariant(pairs in prop::collection::vec((0u8..5, 0u8..10, any::<bool>(), any::<bool>()), 0..60)) {
        let pred: HashSet<(u8, u8)> = pairs.iter().filter(|p| p.2).map(|p| (p.0, p.1)).collect();
        let gold: HashSet<(u8, u8)> = pairs.iter().filter(|p| p.3).map(|p| (p.0, p.1)).collect();
        let a = micro_prf(&pred, &gold);
        let mut rev: Vec<_> = pred.iter().copied().collect();
        rev.reverse();
        let b = micro_prf(&rev.into_iter().collect(), &gold);
        prop_assert_eq!(a, b);
    }
}
