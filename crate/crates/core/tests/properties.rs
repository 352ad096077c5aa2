//! Property tests for folds, metrics, encoders and the sampler.

use proptest::prelude::*;
use textcf::encoder::{EncoderConfig, EncoderKind};
use textcf::eval::{hit_rank_at_m, rank_items, recall_at_m};
use textcf::ingest::{make_folds, Document, FoldMode, InteractionSet};
use textcf::params::ModelShape;
use textcf::recmodel::{Model, Sampler};
use textcf::seeded_rng;

fn interactions() -> impl Strategy<Value = InteractionSet> {
    (5usize..30).prop_flat_map(|n_items| {
        prop::collection::vec(prop::collection::btree_set(0..n_items as u32, 1..n_items.min(12)), 3..25)
            .prop_map(move |lists| {
                InteractionSet::from_lists(n_items, lists.into_iter().map(|s| s.into_iter().collect()).collect()).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cold_folds_partition_items(data in interactions(), k in 2usize..6, seed in 0u64..1000) {
        let plan = make_folds(&data, FoldMode::Cold, k, seed).unwrap();
        let mut seen = vec![0usize; data.num_items()];
        for fold in 0..k {
            let split = plan.split(&data, fold).unwrap();
            for &j in &split.test_items {
                seen[j as usize] += 1;
                // no training like survives for a held-out item
                prop_assert!((0..data.num_users()).all(|u| !split.train.is_positive(u, j)));
            }
            for u in 0..data.num_users() {
                prop_assert_eq!(
                    split.train.positives(u).len() + split.test[u].len(),
                    data.positives(u).len()
                );
            }
        }
        for (j, &c) in seen.iter().enumerate() {
            prop_assert_eq!(c, usize::from(!plan.pinned[j]));
        }
    }

    #[test]
    fn warm_folds_partition_likes(data in interactions(), k in 2usize..6, seed in 0u64..1000) {
        let plan = make_folds(&data, FoldMode::Warm, k, seed).unwrap();
        for u in 0..data.num_users() {
            let mut all: Vec<u32> = Vec::new();
            for fold in 0..k {
                let split = plan.split(&data, fold).unwrap();
                all.extend(&split.test[u]);
            }
            all.sort_unstable();
            let unpinned: Vec<u32> = data.positives(u).iter().copied().filter(|&j| !plan.pinned[j as usize]).collect();
            prop_assert_eq!(all, unpinned);
        }
    }

    #[test]
    fn recall_is_monotone_in_m(
        scores in prop::collection::vec(-5.0f64..5.0, 1..60),
        held_mask in prop::collection::vec(any::<bool>(), 60),
    ) {
        let ids: Vec<u32> = (0..scores.len() as u32).collect();
        let held: Vec<u32> = ids.iter().copied().filter(|&j| held_mask[j as usize]).collect();
        prop_assume!(!held.is_empty());
        let ranked = rank_items(0, &ids, &scores, &[]);
        let mut prev = 0.0;
        for m in 1..=ids.len() {
            let r = recall_at_m(&ranked, &held, m).unwrap();
            prop_assert!(r >= prev && r <= 1.0);
            prev = r;
            prop_assert!(hit_rank_at_m(&ranked, &held, m) <= held.len() as f64);
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn ranking_is_a_sorted_permutation(scores in prop::collection::vec(0u8..4, 1..50)) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let ids: Vec<u32> = (0..scores.len() as u32).rev().collect();
        let r = rank_items(0, &ids, &scores, &[]);
        let mut sorted = r.items.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..scores.len() as u32).collect::<Vec<_>>());
        for w in r.items.windows(2).zip(r.scores.windows(2)) {
            let (items, s) = w;
            prop_assert!(s[0] > s[1] || (s[0] == s[1] && items[0] < items[1]));
        }
    }

    #[test]
    fn average_encoder_ignores_order(tokens in prop::collection::vec(0u32..9, 0..15), seed in 0u64..50) {
        let shape = ModelShape {
            vocab_size: 9,
            num_users: 1,
            num_items: 1,
            num_tags: 0,
            encoder: EncoderConfig::small(EncoderKind::Average, 4, 1, 1),
        };
        let model = Model::init(shape, &mut seeded_rng(seed));
        let mut reversed = tokens.clone();
        reversed.reverse();
        let a = model.content_vector(&Document { item_id: 0, tokens });
        let b = model.content_vector(&Document { item_id: 0, tokens: reversed });
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sampled_negatives_are_never_positives(data in interactions(), seed in 0u64..1000) {
        let pool: Vec<u32> = (0..data.num_items() as u32).collect();
        let sampler = Sampler::new(&data, &pool);
        let batch = sampler.sample(&data, 8, &mut seeded_rng(seed));
        for t in &batch.triples {
            prop_assert!(data.is_positive(t.user, t.pos));
            prop_assert!(!data.is_positive(t.user, t.neg));
        }
        let mut users: Vec<usize> = batch.triples.iter().map(|t| t.user).collect();
        users.dedup();
        prop_assert_eq!(users.len(), batch.len());
    }
}
