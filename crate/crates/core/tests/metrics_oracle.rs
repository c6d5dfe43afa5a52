mod oracle;

use proptest::prelude::*;

use seqmia_core::metrics::{corpus_bleu, modified_precision, sentence_bleu};

fn tokens(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..10, 0..=max_len)
}

fn nonempty(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..10, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn precisions_match_brute_force(h in tokens(12), r in tokens(12)) {
        for n in 1..=4 {
            let p = modified_precision(&h, &r, n).unwrap();
            let (m, t) = oracle::precision(&h, &r, n);
            prop_assert_eq!((p.matches as usize, p.total as usize), (m, t));
        }
    }

    #[test]
    fn sentence_bleu_matches_brute_force(h in tokens(12), r in nonempty(12)) {
        let got = sentence_bleu(&h, &r).unwrap().value();
        let want = oracle::sentence_bleu(&h, &r);
        prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn corpus_bleu_matches_brute_force(pairs in prop::collection::vec((tokens(12), nonempty(12)), 1..6)) {
        let got = corpus_bleu(pairs.iter().map(|(h, r)| (h.as_slice(), r.as_slice()))).unwrap().value();
        let want = oracle::corpus_bleu(&pairs);
        prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn corpus_bleu_ignores_segment_order(mut pairs in prop::collection::vec((tokens(12), nonempty(12)), 2..6)) {
        let a = corpus_bleu(pairs.iter().map(|(h, r)| (h.as_slice(), r.as_slice()))).unwrap();
        pairs.reverse();
        let b = corpus_bleu(pairs.iter().map(|(h, r)| (h.as_slice(), r.as_slice()))).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn identical_long_hypothesis_scores_one(r in prop::collection::vec(0u8..10, 4..=12)) {
        prop_assert!((sentence_bleu(&r, &r).unwrap().value() - 1.0).abs() < 1e-12);
        prop_assert!((corpus_bleu([(r.as_slice(), r.as_slice())]).unwrap().value() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn oracle_agrees_with_hand_counts() {
    // "the the the" against "the cat": unigram matches clip at one
    assert_eq!(oracle::precision(&[0, 0, 0], &[0, 1], 1), (1, 3));
    assert_eq!(oracle::precision(&[0, 1], &[0, 1], 2), (1, 1));
    assert_eq!(oracle::precision(&[0], &[0], 2), (0, 0));
}
