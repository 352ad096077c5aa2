//! Warm-start and cold-start fold construction.
//!
//! Items with fewer than `min_item_likes` likes are pinned: they are never
//! held out. Warm folds partition each user's remaining positives; cold
//! folds partition the remaining items. Both assign round-robin from a
//! random offset after a seeded shuffle.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::InteractionSet;
use crate::{seeded_rng, Error, Result};

pub const DEFAULT_MIN_ITEM_LIKES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    Warm,
    Cold,
}

impl fmt::Display for FoldMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldMode::Warm => "warm",
            FoldMode::Cold => "cold",
        })
    }
}

impl FromStr for FoldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(FoldMode::Warm),
            "cold" => Ok(FoldMode::Cold),
            _ => Err(Error::config(format!("unknown fold mode `{s}` (warm|cold)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub mode: FoldMode,
    pub num_folds: usize,
    pub seed: u64,
    /// `true` for items that always stay in training.
    pub pinned: Vec<bool>,
    /// Warm: fold of each positive, parallel to the user's positive list.
    pub user_folds: Vec<Vec<Option<usize>>>,
    /// Cold: fold of each item.
    pub item_folds: Vec<Option<usize>>,
    /// Users left without any held-out like in warm mode.
    pub users_without_test: usize,
}

/// Train/test view of one fold.
#[derive(Clone, Debug)]
pub struct FoldSplit {
    pub mode: FoldMode,
    pub fold: usize,
    pub train: InteractionSet,
    /// Held-out positives per user (sorted).
    pub test: Vec<Vec<u32>>,
    /// Cold: items held out in this fold (sorted). Empty for warm folds.
    pub test_items: Vec<u32>,
    /// Items that may appear in training batches.
    pub train_items: Vec<u32>,
}

pub fn make_folds(
    interactions: &InteractionSet,
    mode: FoldMode,
    num_folds: usize,
    seed: u64,
) -> Result<FoldPlan> {
    make_folds_with(interactions, mode, num_folds, seed, DEFAULT_MIN_ITEM_LIKES)
}

pub fn make_folds_with(
    interactions: &InteractionSet,
    mode: FoldMode,
    num_folds: usize,
    seed: u64,
    min_item_likes: usize,
) -> Result<FoldPlan> {
    if num_folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {num_folds}")));
    }
    let pinned: Vec<bool> = interactions
        .item_like_counts()
        .iter()
        .map(|&c| c < min_item_likes)
        .collect();
    let mut rng = seeded_rng(seed);
    let mut plan = FoldPlan {
        mode,
        num_folds,
        seed,
        pinned,
        user_folds: Vec::new(),
        item_folds: Vec::new(),
        users_without_test: 0,
    };
    match mode {
        FoldMode::Warm => {
            for u in 0..interactions.num_users() {
                let pos = interactions.positives(u);
                let mut open: Vec<usize> =
                    (0..pos.len()).filter(|&k| !plan.pinned[pos[k] as usize]).collect();
                let mut folds = vec![None; pos.len()];
                if open.is_empty() {
                    plan.users_without_test += 1;
                }
                assign_round_robin(&mut open, num_folds, &mut rng, |k, f| folds[k] = Some(f));
                plan.user_folds.push(folds);
            }
        }
        FoldMode::Cold => {
            let mut folds = vec![None; interactions.num_items()];
            let mut open: Vec<usize> = (0..interactions.num_items())
                .filter(|&j| !plan.pinned[j])
                .collect();
            assign_round_robin(&mut open, num_folds, &mut rng, |j, f| folds[j] = Some(f));
            plan.item_folds = folds;
        }
    }
    Ok(plan)
}

fn assign_round_robin(
    slots: &mut [usize],
    num_folds: usize,
    rng: &mut impl Rng,
    mut assign: impl FnMut(usize, usize),
) {
    slots.shuffle(rng);
    let offset = rng.gen_range(0..num_folds);
    for (i, &s) in slots.iter().enumerate() {
        assign(s, (offset + i) % num_folds);
    }
}

impl FoldPlan {
    pub fn split(&self, interactions: &InteractionSet, fold: usize) -> Result<FoldSplit> {
        if fold >= self.num_folds {
            return Err(Error::config(format!(
                "fold {fold} out of range for a {}-fold plan",
                self.num_folds
            )));
        }
        let n_users = interactions.num_users();
        let n_items = interactions.num_items();
        let mut train = Vec::with_capacity(n_users);
        let mut test = Vec::with_capacity(n_users);
        match self.mode {
            FoldMode::Warm => {
                if self.user_folds.len() != n_users {
                    return Err(Error::config("fold plan does not match the interactions"));
                }
                for u in 0..n_users {
                    let (mut tr, mut te) = (Vec::new(), Vec::new());
                    for (k, &j) in interactions.positives(u).iter().enumerate() {
                        if self.user_folds[u][k] == Some(fold) {
                            te.push(j);
                        } else {
                            tr.push(j);
                        }
                    }
                    train.push(tr);
                    test.push(te);
                }
                Ok(FoldSplit {
                    mode: self.mode,
                    fold,
                    train: InteractionSet::with_sources(
                        n_items,
                        train,
                        interactions.source_users().to_vec(),
                    )?,
                    test,
                    test_items: Vec::new(),
                    train_items: (0..n_items as u32).collect(),
                })
            }
            FoldMode::Cold => {
                if self.item_folds.len() != n_items {
                    return Err(Error::config("fold plan does not match the interactions"));
                }
                let held = |j: u32| self.item_folds[j as usize] == Some(fold);
                for u in 0..n_users {
                    let (te, tr): (Vec<u32>, Vec<u32>) =
                        interactions.positives(u).iter().partition(|&&j| held(j));
                    train.push(tr);
                    test.push(te);
                }
                Ok(FoldSplit {
                    mode: self.mode,
                    fold,
                    train: InteractionSet::with_sources(
                        n_items,
                        train,
                        interactions.source_users().to_vec(),
                    )?,
                    test,
                    test_items: (0..n_items as u32).filter(|&j| held(j)).collect(),
                    train_items: (0..n_items as u32).filter(|&j| !held(j)).collect(),
                })
            }
        }
    }
}

impl FoldSplit {
    /// Train on every like with nothing held out (used for fitting checks).
    pub fn full(interactions: &InteractionSet) -> Self {
        FoldSplit {
            mode: FoldMode::Warm,
            fold: 0,
            train: interactions.clone(),
            test: vec![Vec::new(); interactions.num_users()],
            test_items: Vec::new(),
            train_items: (0..interactions.num_items() as u32).collect(),
        }
    }

    /// Items with at least one training like.
    pub fn active_items(&self) -> Vec<u32> {
        self.train
            .item_like_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, _)| j as u32)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn popular_dataset() -> InteractionSet {
        // items 0..5 liked by everyone, items 5..8 by only the first two users
        let mut lists: Vec<Vec<u32>> = (0..6).map(|_| (0..5).collect()).collect();
        lists[0].extend([5, 6, 7]);
        lists[1].extend([5, 6, 7]);
        InteractionSet::from_lists(8, lists).unwrap()
    }

    #[test]
    fn warm_partitions_each_user() {
        let set = popular_dataset();
        let plan = make_folds(&set, FoldMode::Warm, 5, 1).unwrap();
        assert!(plan.pinned[5] && plan.pinned[6] && plan.pinned[7]);
        for f in 0..5 {
            let split = plan.split(&set, f).unwrap();
            for u in 0..set.num_users() {
                // five popular positives, five folds → one held out per fold
                assert_eq!(split.test[u].len(), 1);
                assert!(split.train.positives(u).len() >= 4);
                for j in [5, 6, 7] {
                    if set.is_positive(u, j) {
                        assert!(split.train.is_positive(u, j));
                    }
                }
            }
        }
    }

    #[test]
    fn cold_keeps_pinned_items_in_training() {
        let set = popular_dataset();
        let plan = make_folds(&set, FoldMode::Cold, 5, 3).unwrap();
        for f in 0..5 {
            let split = plan.split(&set, f).unwrap();
            assert_eq!(split.test_items.len(), 1);
            for j in [5, 6, 7] {
                assert!(!split.test_items.contains(&j));
                assert!(split.train_items.contains(&j));
            }
            for u in 0..set.num_users() {
                for &j in &split.test[u] {
                    assert!(split.test_items.contains(&j));
                    assert!(!split.train.is_positive(u, j));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_plan() {
        let set = popular_dataset();
        for mode in [FoldMode::Warm, FoldMode::Cold] {
            assert_eq!(
                make_folds(&set, mode, 3, 99).unwrap(),
                make_folds(&set, mode, 3, 99).unwrap()
            );
        }
    }

    #[test]
    fn rejects_single_fold() {
        assert!(make_folds(&popular_dataset(), FoldMode::Warm, 1, 0).is_err());
    }

    #[test]
    fn all_pinned_user_is_counted() {
        let set = InteractionSet::from_lists(4, vec![vec![0, 1], vec![2]]).unwrap();
        let plan = make_folds(&set, FoldMode::Warm, 2, 0).unwrap();
        assert_eq!(plan.users_without_test, 2);
    }
}
