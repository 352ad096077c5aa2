//! Minibatch sampling: distinct users, one positive and one negative each.

use rand::seq::index;
use rand::Rng;

use crate::ingest::InteractionSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos: u32,
    pub neg: u32,
    /// `|R⁺_i|` in the training split, used for the confidence weight.
    pub num_likes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainBatch {
    pub triples: Vec<Triple>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Distinct items referenced by the batch, ascending.
    pub fn items(&self) -> Vec<u32> {
        let mut items: Vec<u32> = self.triples.iter().flat_map(|t| [t.pos, t.neg]).collect();
        items.sort_unstable();
        items.dedup();
        items
    }
}

/// Precomputed sampling state for one training split.
#[derive(Clone, Debug)]
pub struct Sampler {
    item_pool: Vec<u32>,
    /// Per-user held-out positives that must never be drawn as negatives.
    held_out: Vec<Vec<u32>>,
    eligible: Vec<usize>,
    skipped: usize,
}

impl Sampler {
    /// `item_pool` lists the items allowed as negatives (for cold folds the
    /// held-out items are excluded). Users with no positive, or with no
    /// item of the pool left to draw as a negative, are skipped.
    pub fn new(train: &InteractionSet, item_pool: &[u32]) -> Self {
        Self::with_held_out(train, item_pool, Vec::new())
    }

    /// Like [`Sampler::new`], additionally keeping each user's held-out
    /// positives (validation or test) out of its negatives.
    pub fn with_held_out(train: &InteractionSet, item_pool: &[u32], mut held_out: Vec<Vec<u32>>) -> Self {
        held_out.iter_mut().for_each(|h| {
            h.sort_unstable();
            h.dedup();
        });
        let mut pool = item_pool.to_vec();
        pool.sort_unstable();
        pool.dedup();
        let mut eligible = Vec::new();
        let mut skipped = 0;
        for u in 0..train.num_users() {
            let pos = train.positives(u);
            if pos.is_empty() {
                continue;
            }
            let blocked = |j: &u32| {
                train.is_positive(u, *j) || held_out.get(u).is_some_and(|h| h.binary_search(j).is_ok())
            };
            if pool.iter().all(blocked) {
                log::warn!("user {u} likes every candidate item; no negative can be drawn");
                skipped += 1;
                continue;
            }
            eligible.push(u);
        }
        Sampler {
            item_pool: pool,
            held_out,
            eligible,
            skipped,
        }
    }

    pub fn eligible_users(&self) -> &[usize] {
        &self.eligible
    }

    /// Users dropped because no negative was available.
    pub fn skipped_users(&self) -> usize {
        self.skipped
    }

    pub fn sample(&self, train: &InteractionSet, batch_users: usize, rng: &mut impl Rng) -> TrainBatch {
        let b = batch_users.min(self.eligible.len());
        if b == 0 {
            return TrainBatch::default();
        }
        let chosen = index::sample(rng, self.eligible.len(), b);
        let triples = chosen
            .into_iter()
            .map(|k| {
                let user = self.eligible[k];
                let pos_list = train.positives(user);
                let pos = pos_list[rng.gen_range(0..pos_list.len())];
                let neg = loop {
                    let j = self.item_pool[rng.gen_range(0..self.item_pool.len())];
                    let held = self.held_out.get(user).is_some_and(|h| h.binary_search(&j).is_ok());
                    if !held && !train.is_positive(user, j) {
                        break j;
                    }
                };
                Triple {
                    user,
                    pos,
                    neg,
                    num_likes: pos_list.len(),
                }
            })
            .collect();
        TrainBatch { triples }
    }
}

/// One-shot convenience over [`Sampler`].
pub fn sample_minibatch(
    train: &InteractionSet,
    item_pool: &[u32],
    batch_users: usize,
    rng: &mut impl Rng,
) -> TrainBatch {
    Sampler::new(train, item_pool).sample(train, batch_users, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn all_items(n: u32) -> Vec<u32> {
        (0..n).collect()
    }

    #[test]
    fn forced_choices() {
        let train = InteractionSet::from_lists(4, vec![vec![1, 2, 3]]).unwrap();
        let batch = sample_minibatch(&train, &all_items(4), 1, &mut seeded_rng(0));
        assert_eq!(batch.triples[0].neg, 0);
        let train = InteractionSet::from_lists(2, vec![vec![1]]).unwrap();
        let batch = sample_minibatch(&train, &all_items(2), 1, &mut seeded_rng(0));
        assert_eq!((batch.triples[0].pos, batch.triples[0].neg), (1, 0));
    }

    #[test]
    fn same_seed_same_batch() {
        let lists = (0..20).map(|u| vec![u % 7, 7 + u % 5, 12]).collect();
        let train = InteractionSet::from_lists(30, lists).unwrap();
        let a = sample_minibatch(&train, &all_items(30), 8, &mut seeded_rng(5));
        let b = sample_minibatch(&train, &all_items(30), 8, &mut seeded_rng(5));
        assert_eq!(a, b);
        let mut users: Vec<usize> = a.triples.iter().map(|t| t.user).collect();
        users.sort_unstable();
        users.dedup();
        assert_eq!(users.len(), 8);
        for t in &a.triples {
            assert!(train.is_positive(t.user, t.pos));
            assert!(!train.is_positive(t.user, t.neg));
        }
    }

    #[test]
    fn batch_size_caps_at_user_count() {
        let train = InteractionSet::from_lists(5, vec![vec![0], vec![1]]).unwrap();
        let batch = sample_minibatch(&train, &all_items(5), 10, &mut seeded_rng(1));
        assert_eq!(batch.len(), 2);
    }

    #[test]
    fn saturated_user_is_skipped() {
        let train = InteractionSet::from_lists(2, vec![vec![0, 1], vec![0]]).unwrap();
        let sampler = Sampler::new(&train, &all_items(2));
        assert_eq!(sampler.eligible_users(), &[1]);
        assert_eq!(sampler.skipped_users(), 1);
    }

    #[test]
    fn negatives_stay_in_pool() {
        let train = InteractionSet::from_lists(10, vec![vec![0, 1]]).unwrap();
        let sampler = Sampler::new(&train, &[0, 1, 2, 3]);
        let mut rng = seeded_rng(3);
        for _ in 0..200 {
            let neg = sampler.sample(&train, 1, &mut rng).triples[0].neg;
            assert!(neg == 2 || neg == 3);
        }
    }

    #[test]
    fn held_out_items_are_never_negatives() {
        let train = InteractionSet::from_lists(5, vec![vec![0], vec![1]]).unwrap();
        let sampler = Sampler::with_held_out(&train, &all_items(5), vec![vec![1, 2, 3], vec![]]);
        let mut rng = seeded_rng(9);
        for _ in 0..200 {
            let b = sampler.sample(&train, 2, &mut rng);
            let t = b.triples.iter().find(|t| t.user == 0).unwrap();
            assert_eq!(t.neg, 4);
        }
        let blocked = Sampler::with_held_out(&train, &all_items(2), vec![vec![1], vec![]]);
        assert_eq!(blocked.eligible_users(), &[1]);
    }

    #[test]
    fn positive_draws_are_uniform() {
        let pos = vec![2, 5, 8, 11];
        let train = InteractionSet::from_lists(12, vec![pos.clone()]).unwrap();
        let sampler = Sampler::new(&train, &all_items(12));
        let mut rng = seeded_rng(11);
        let draws = 10_000;
        let mut counts = [0usize; 12];
        for _ in 0..draws {
            counts[sampler.sample(&train, 1, &mut rng).triples[0].pos as usize] += 1;
        }
        let expected = draws as f64 / pos.len() as f64;
        for j in pos {
            let rel = (counts[j as usize] as f64 - expected).abs() / expected;
            assert!(rel < 0.05, "item {j}: {} draws", counts[j as usize]);
        }
    }
}
