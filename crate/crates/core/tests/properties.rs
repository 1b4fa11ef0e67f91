use std::collections::BTreeSet;

use corgii::diff::Tensor;
use corgii::harness::average_precision;
use corgii::index::InvertedIndex;
use corgii::lexicon::{Token, TokenMultiset};
use corgii::probe::{hamming_ball, shortlist, CoocNeighborhoods};
use corgii::reranker::sinkhorn;
use proptest::prelude::*;

const BITS: usize = 6;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn corpus() -> impl Strategy<Value = Vec<TokenMultiset>> {
    prop::collection::vec(prop::collection::vec(0..1u32 << BITS, 1..8), 1..30).prop_map(|docs| {
        docs.iter()
            .enumerate()
            .map(|(g, tokens)| TokenMultiset::from_tokens(g as u32, tokens))
            .collect()
    })
}

proptest! {
    #[test]
    fn ball_size_is_a_binomial_sum(t in 0..1u32 << BITS, r in 0..=BITS) {
        let ball = hamming_ball(t, r, BITS).unwrap();
        prop_assert_eq!(ball.len(), (0..=r).map(|i| binomial(BITS, i)).sum::<usize>());
        prop_assert!(ball.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(ball.iter().all(|&x| ((x ^ t).count_ones() as usize) <= r));
    }

    #[test]
    fn balls_nest(t in 0..1u32 << BITS, r in 0..BITS) {
        let inner: BTreeSet<Token> = hamming_ball(t, r, BITS).unwrap().into_iter().collect();
        let outer: BTreeSet<Token> = hamming_ball(t, r + 1, BITS).unwrap().into_iter().collect();
        prop_assert!(inner.is_subset(&outer));
    }

    #[test]
    fn cooc_rows_are_distributions(docs in corpus(), t in 0..1u32 << BITS) {
        let index = InvertedIndex::build(BITS, &docs).unwrap();
        let cooc = CoocNeighborhoods::new(&index);
        let row = cooc.row(&index, t);
        if index.posting(t).is_empty() {
            prop_assert!(row.dense.is_empty());
        } else {
            prop_assert!((row.dense.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // A token co-occurs with itself in every graph it appears in.
            prop_assert!(cooc.sim(&index, t, t) > 0.0);
        }
        let top = cooc.neighbors(&index, t, 4);
        prop_assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn index_codec_round_trips(docs in corpus()) {
        let index = InvertedIndex::build(BITS, &docs).unwrap();
        let back = InvertedIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(&back, &index);
        let unique: usize = docs.iter().map(|d| d.unique().len()).sum();
        prop_assert_eq!(index.total_postings(), unique);
    }

    #[test]
    fn truncated_index_is_rejected(docs in corpus(), cut in 1usize..64) {
        let bytes = InvertedIndex::build(BITS, &docs).unwrap().to_bytes();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(InvertedIndex::from_bytes(&bytes[..keep]).is_err());
    }

    #[test]
    fn shortlists_shrink_as_delta_grows(docs in corpus(), q in prop::collection::vec(0..1u32 << BITS, 1..6), a in 0.0..4.0f64, b in 0.0..4.0f64) {
        let index = InvertedIndex::build(BITS, &docs).unwrap();
        let scores = index.score_uniform(&TokenMultiset::from_tokens(0, &q)).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let wide: BTreeSet<u32> = shortlist(0, &scores, lo).ids().into_iter().collect();
        let narrow: BTreeSet<u32> = shortlist(0, &scores, hi).ids().into_iter().collect();
        prop_assert!(narrow.is_subset(&wide));
    }

    #[test]
    fn average_precision_is_a_fraction(ranked in prop::collection::vec(0u32..40, 0..30), rel in prop::collection::btree_set(0u32..40, 1..10)) {
        let mut seen = BTreeSet::new();
        let ranked: Vec<u32> = ranked.into_iter().filter(|c| seen.insert(*c)).collect();
        let rel: Vec<u32> = rel.into_iter().collect();
        let ap = average_precision(&ranked, &rel).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        let perfect: Vec<u32> = rel.iter().copied().chain(ranked.iter().copied().filter(|c| !rel.contains(c))).collect();
        prop_assert!((average_precision(&perfect, &rel).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinkhorn_rows_sum_to_one(n in 1usize..8, vals in prop::collection::vec(-5.0..5.0f64, 64), temp in 0.05..2.0f64, iters in 1usize..20) {
        let logits = Tensor::new(n, n, vals[..n * n].to_vec()).unwrap();
        let p = sinkhorn(&logits, temp, iters).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| p.get(i, j)).sum();
            prop_assert!((row - 1.0).abs() < 1e-9);
            prop_assert!((0..n).all(|j| p.get(i, j).is_finite() && p.get(i, j) >= 0.0));
        }
    }

    #[test]
    fn token_dumps_round_trip(g in 0u32..1000, tokens in prop::collection::vec(0..1u32 << 10, 0..20)) {
        let m = TokenMultiset::from_tokens(g, &tokens);
        prop_assert_eq!(m.to_string().parse::<TokenMultiset>().unwrap(), m);
    }
}
