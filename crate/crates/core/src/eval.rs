//! Ranking, Recall@M and HitRank@M, and the warm, cold and tag protocols.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{Document, FoldMode, FoldSplit, InteractionSet, TagSet};
use crate::recmodel::Model;
use crate::tensor::dot;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Warm,
    Cold,
    Tags,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Warm => "warm",
            Protocol::Cold => "cold",
            Protocol::Tags => "tags",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(Protocol::Warm),
            "cold" => Ok(Protocol::Cold),
            "tags" => Ok(Protocol::Tags),
            _ => Err(Error::config(format!("unknown protocol `{s}` (warm|cold|tags)"))),
        }
    }
}

/// Which items a cold-protocol user is ranked over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidatePool {
    /// Only the fold's held-out items.
    #[default]
    Fold,
    /// Held-out items plus every training-active item.
    All,
}

impl FromStr for CandidatePool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fold" => Ok(CandidatePool::Fold),
            "all" => Ok(CandidatePool::All),
            _ => Err(Error::config(format!("unknown candidate pool `{s}` (fold|all)"))),
        }
    }
}

/// Refuse to evaluate a run under a protocol it was not trained for.
pub fn check_protocol(trained: FoldMode, protocol: Protocol) -> Result<()> {
    match (trained, protocol) {
        (FoldMode::Warm, Protocol::Warm) | (FoldMode::Cold, Protocol::Cold | Protocol::Tags) => Ok(()),
        _ => Err(Error::Refused(format!(
            "run was trained on a {trained} fold and cannot be evaluated under the {protocol} protocol"
        ))),
    }
}

/// Items ordered best first; ties go to the lower id.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Sort `candidates` by score, dropping any id in `exclude` (sorted).
pub fn rank_items(user: usize, candidates: &[u32], scores: &[f64], exclude: &[u32]) -> RankedList {
    assert_eq!(candidates.len(), scores.len(), "one score per candidate");
    let mut pairs: Vec<(u32, f64)> = candidates
        .iter()
        .zip(scores)
        .filter(|(j, _)| exclude.binary_search(j).is_err())
        .map(|(&j, &s)| (j, s))
        .collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (items, scores) = pairs.into_iter().unzip();
    RankedList { user, items, scores }
}

/// `|top-M ∩ held_out| / |held_out|`; `None` when nothing is held out.
pub fn recall_at_m(ranked: &RankedList, held_out: &[u32], m: usize) -> Option<f64> {
    if held_out.is_empty() {
        return None;
    }
    let hits = ranked.items.iter().take(m).filter(|j| held_out.contains(j)).count();
    Some(hits as f64 / held_out.len() as f64)
}

/// Sum of `1 / rank` (1-based) over held-out items inside the top M.
pub fn hit_rank_at_m(ranked: &RankedList, held_out: &[u32], m: usize) -> f64 {
    ranked
        .items
        .iter()
        .take(m)
        .enumerate()
        .filter(|(_, j)| held_out.contains(j))
        .map(|(r, _)| 1.0 / (r + 1) as f64)
        .sum()
}

/// Metrics of one evaluated user (or item, for the tag protocol).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: usize,
    pub held_out: usize,
    /// One value per entry of the report's `ms`.
    pub recall: Vec<f64>,
    pub hit_rank: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub m: usize,
    pub recall: f64,
    pub hit_rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub fold: usize,
    pub ms: Vec<usize>,
    pub evaluated: usize,
    pub skipped: usize,
    pub candidates: usize,
    pub summary: Vec<MetricSummary>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    fn from_rows(protocol: Protocol, fold: usize, ms: &[usize], rows: Vec<EvalRow>, skipped: usize, candidates: usize) -> Self {
        let n = rows.len();
        let summary = ms
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let mean = |f: &dyn Fn(&EvalRow) -> f64| {
                    if n == 0 {
                        0.0
                    } else {
                        rows.iter().map(f).sum::<f64>() / n as f64
                    }
                };
                MetricSummary {
                    m,
                    recall: mean(&|r| r.recall[k]),
                    hit_rank: mean(&|r| r.hit_rank[k]),
                }
            })
            .collect();
        EvalReport {
            protocol,
            fold,
            ms: ms.to_vec(),
            evaluated: n,
            skipped,
            candidates,
            summary,
            rows,
        }
    }

    /// Macro-averaged recall at `m`, if `m` was evaluated.
    pub fn recall(&self, m: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.m == m).map(|s| s.recall)
    }

    pub fn hit_rank(&self, m: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.m == m).map(|s| s.hit_rank)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn metric_row(id: usize, ranked: &RankedList, held_out: &[u32], ms: &[usize]) -> Option<EvalRow> {
    let recall = ms
        .iter()
        .map(|&m| recall_at_m(ranked, held_out, m))
        .collect::<Option<Vec<f64>>>()?;
    Some(EvalRow {
        id,
        held_out: held_out.len(),
        recall,
        hit_rank: ms.iter().map(|&m| hit_rank_at_m(ranked, held_out, m)).collect(),
    })
}

/// Rank `candidates` for every user and score them against `held_out`.
///
/// Items listed in `cold_items` (sorted) are scored without their offset
/// and bias. Each user's training positives are excluded from its list.
/// Users without held-out items are skipped and counted.
pub fn evaluate_users(
    model: &Model,
    docs: &[Document],
    train: &InteractionSet,
    held_out: &[Vec<u32>],
    candidates: &[u32],
    cold_items: &[u32],
    ms: &[usize],
) -> (Vec<EvalRow>, usize) {
    let (cold_ids, warm_ids): (Vec<u32>, Vec<u32>) =
        candidates.iter().partition(|j| cold_items.binary_search(j).is_ok());
    let cold_vecs = model.item_vectors(docs, &cold_ids, true);
    let warm_vecs = model.item_vectors(docs, &warm_ids, false);
    let mut vectors: Vec<(u32, bool, &[f64])> = Vec::with_capacity(candidates.len());
    for (j, v) in cold_ids.iter().zip(&cold_vecs) {
        vectors.push((*j, true, v));
    }
    for (j, v) in warm_ids.iter().zip(&warm_vecs) {
        vectors.push((*j, false, v));
    }

    let results: Vec<Option<EvalRow>> = (0..held_out.len())
        .into_par_iter()
        .map(|u| {
            if held_out[u].is_empty() {
                return None;
            }
            let ids: Vec<u32> = vectors.iter().map(|v| v.0).collect();
            let scores: Vec<f64> = vectors.iter().map(|&(j, cold, f)| model.score(u, j, f, cold)).collect();
            let ranked = rank_items(u, &ids, &scores, train.positives(u));
            metric_row(u, &ranked, &held_out[u], ms)
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), skipped)
}

/// Evaluate a fold's held-out likes under the warm or cold protocol.
pub fn evaluate(
    model: &Model,
    docs: &[Document],
    split: &FoldSplit,
    protocol: Protocol,
    ms: &[usize],
    pool: CandidatePool,
) -> Result<EvalReport> {
    check_ms(ms)?;
    let (candidates, cold) = match protocol {
        Protocol::Warm => {
            check_protocol(split.mode, protocol)?;
            (split.active_items(), Vec::new())
        }
        Protocol::Cold => {
            check_protocol(split.mode, protocol)?;
            let cand = match pool {
                CandidatePool::Fold => split.test_items.clone(),
                CandidatePool::All => {
                    let mut c = split.active_items();
                    c.extend(&split.test_items);
                    c.sort_unstable();
                    c.dedup();
                    c
                }
            };
            (cand, split.test_items.clone())
        }
        Protocol::Tags => return Err(Error::config("use evaluate_tags for the tag protocol")),
    };
    let (rows, skipped) = evaluate_users(model, docs, &split.train, &split.test, &candidates, &cold, ms);
    Ok(EvalReport::from_rows(protocol, split.fold, ms, rows, skipped, candidates.len()))
}

/// Recall of each user's own training likes among all training-active
/// items, with nothing excluded. Measures how well a model fits its data.
pub fn evaluate_fit(model: &Model, docs: &[Document], train: &InteractionSet, ms: &[usize]) -> Result<EvalReport> {
    check_ms(ms)?;
    let counts = train.item_like_counts();
    let candidates: Vec<u32> = (0..counts.len() as u32).filter(|&j| counts[j as usize] > 0).collect();
    let none = InteractionSet::from_lists(train.num_items(), vec![Vec::new(); train.num_users()])?;
    let (rows, skipped) = evaluate_users(model, docs, &none, train.all_positives(), &candidates, &[], ms);
    Ok(EvalReport::from_rows(Protocol::Warm, 0, ms, rows, skipped, candidates.len()))
}

/// Rank every tag for each of `items` and score against its observed tags.
/// Items in `cold_items` are encoded without their offset.
pub fn evaluate_tags(
    model: &Model,
    docs: &[Document],
    tags: &TagSet,
    items: &[u32],
    cold_items: &[u32],
    fold: usize,
    ms: &[usize],
) -> Result<EvalReport> {
    check_ms(ms)?;
    let table = model
        .params
        .tags
        .as_ref()
        .ok_or_else(|| Error::Refused("model has no tag embeddings (trained without multi-task loss)".into()))?;
    let all_tags: Vec<u32> = (0..table.rows() as u32).collect();
    let results: Vec<Option<EvalRow>> = items
        .par_iter()
        .map(|&j| {
            let observed = tags.tags(j as usize);
            if observed.is_empty() {
                return None;
            }
            let cold = cold_items.binary_search(&j).is_ok();
            let f = &model.item_vectors(docs, &[j], cold)[0];
            let scores: Vec<f64> = all_tags.iter().map(|&l| dot(f, table.row(l as usize))).collect();
            let ranked = rank_items(j as usize, &all_tags, &scores, &[]);
            metric_row(j as usize, &ranked, observed, ms)
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let rows = results.into_iter().flatten().collect();
    Ok(EvalReport::from_rows(Protocol::Tags, fold, ms, rows, skipped, all_tags.len()))
}

fn check_ms(ms: &[usize]) -> Result<()> {
    if ms.is_empty() || ms.contains(&0) {
        return Err(Error::config("cutoffs M must be a non-empty list of positive integers"));
    }
    Ok(())
}
