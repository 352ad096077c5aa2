//! The training loop: sampling, forward/backward, Adam, periodic
//! validation recall, early stopping, checkpoints and resumption.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::encoder::EncoderConfig;
use crate::eval::evaluate_users;
use crate::ingest::{make_folds, Dataset, Document, FoldMode, FoldSplit, InteractionSet, TagSet};
use crate::params::{ModelParams, ModelShape};
use crate::recmodel::{LossConfig, Model, Sampler};
use crate::tensor::adam::{AdamConfig, AdamState, Moments};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{ParamGroups, Tensor};
use crate::{seeded_rng, Error, Result, SeededRng};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Stream ids that keep the independent random sequences apart.
const STREAM_TRAIN: u64 = 1;
const STREAM_VALIDATION: u64 = 2;

/// Which fold of which plan a run trains on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldSpec {
    pub mode: FoldMode,
    pub num_folds: usize,
    pub index: usize,
    /// Seed of the fold plan (independent of the training seed).
    pub seed: u64,
}

impl Default for FoldSpec {
    fn default() -> Self {
        FoldSpec {
            mode: FoldMode::Cold,
            num_folds: 5,
            index: 0,
            seed: 0,
        }
    }
}

impl FoldSpec {
    pub fn split(&self, interactions: &InteractionSet) -> Result<FoldSplit> {
        make_folds(interactions, self.mode, self.num_folds, self.seed)?.split(interactions, self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub multi_task: bool,
    pub batch_users: usize,
    pub max_updates: u64,
    pub eval_every: u64,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Users need at least this many training positives to give any to
    /// validation.
    pub validation_min_positives: usize,
    /// Cutoff M of the monitored recall.
    pub monitor_m: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
    pub folds: FoldSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderConfig::default(),
            multi_task: true,
            batch_users: 512,
            max_updates: 20_000,
            eval_every: 250,
            patience: 8,
            validation_fraction: 0.05,
            validation_min_positives: 10,
            monitor_m: 50,
            seed: 0,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            clip_norm: None,
            folds: FoldSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_updates == 0 {
            return Err(Error::config("max_updates must be at least 1"));
        }
        if self.patience == 0 || self.eval_every == 0 || self.batch_users == 0 || self.monitor_m == 0 {
            return Err(Error::config("patience, eval_every, batch_users and monitor_m must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::config("clip_norm must be positive"));
            }
        }
        self.loss.validate()?;
        self.encoder.validate()?;
        self.adam.validate()
    }
}

/// Move a seeded `fraction` of each sufficiently active user's positives
/// into a validation set.
pub fn split_validation(
    train: &InteractionSet,
    fraction: f64,
    min_positives: usize,
    seed: u64,
) -> Result<(InteractionSet, Vec<Vec<u32>>)> {
    let mut rng = seeded_rng(seed);
    rng.set_stream(STREAM_VALIDATION);
    let mut kept = Vec::with_capacity(train.num_users());
    let mut validation = Vec::with_capacity(train.num_users());
    for u in 0..train.num_users() {
        let pos = train.positives(u);
        let n = pos.len();
        let n_val = if fraction > 0.0 && n >= min_positives.max(2) {
            // tolerance absorbs representation error, e.g. 20 × 0.05
            ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1)
        } else {
            0
        };
        let mut order = pos.to_vec();
        order.shuffle(&mut rng);
        let mut val = order.split_off(n - n_val);
        val.sort_unstable();
        order.sort_unstable();
        kept.push(order);
        validation.push(val);
    }
    let kept = InteractionSet::with_sources(train.num_items(), kept, train.source_users().to_vec())?;
    Ok((kept, validation))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxUpdates,
    EarlyStop,
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Recall over held-out validation positives.
    Validation,
    /// Recall over the training positives themselves (no validation data).
    Training,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub update: u64,
    /// Mean batch objective since the previous evaluation.
    pub train_loss: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EvalPoint>,
    pub best_update: u64,
    pub best_recall: f64,
    pub stop_reason: StopReason,
    pub updates: u64,
    pub monitor: Monitor,
    pub monitor_m: usize,
    pub validation_items: usize,
    pub skipped_users: usize,
    /// Config keys changed on resumption.
    pub overrides: Vec<String>,
}

/// The best parameters seen so far.
#[derive(Clone, Debug, PartialEq)]
struct Best {
    update: u64,
    recall: f64,
    params: ModelParams,
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    rng: SeededRng,
    updates: u64,
    history: Vec<EvalPoint>,
    best: Option<Best>,
    evals_since_best: usize,
    loss_sum: f64,
    loss_count: u64,
}

impl TrainState {
    pub fn updates(&self) -> u64 {
        self.updates
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The model at the best monitored recall.
    pub best: Model,
    pub report: TrainReport,
    pub state: TrainState,
}

/// Inputs shared by every update of one run.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    docs: &'a [Document],
    tags: Option<&'a TagSet>,
    train: InteractionSet,
    monitor_held: Vec<Vec<u32>>,
    monitor_train: InteractionSet,
    monitor: Monitor,
    candidates: Vec<u32>,
    sampler: Sampler,
    shape: ModelShape,
    validation_items: usize,
    overrides: Vec<String>,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, split: &FoldSplit, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if split.train.num_likes() == 0 {
            return Err(Error::config("training split has no likes"));
        }
        if cfg.multi_task && dataset.tags.num_tags() == 0 {
            return Err(Error::config("multi-task training needs at least one tag"));
        }
        let (train, validation) = split_validation(
            &split.train,
            cfg.validation_fraction,
            cfg.validation_min_positives,
            cfg.seed,
        )?;
        let validation_items: usize = validation.iter().map(Vec::len).sum();
        let (monitor, monitor_held, monitor_train) = if validation_items > 0 {
            (Monitor::Validation, validation.clone(), train.clone())
        } else {
            log::info!("no validation positives; monitoring recall on the training likes");
            let empty = InteractionSet::from_lists(train.num_items(), vec![Vec::new(); train.num_users()])?;
            (Monitor::Training, train.all_positives().to_vec(), empty)
        };
        // negatives never come from the user's validation or test likes
        let held_out: Vec<Vec<u32>> = validation
            .iter()
            .zip(&split.test)
            .map(|(v, t)| v.iter().chain(t).copied().collect())
            .collect();
        let sampler = Sampler::with_held_out(&train, &split.train_items, held_out);
        if sampler.eligible_users().is_empty() {
            return Err(Error::config("no user can be sampled for training"));
        }
        let shape = ModelShape {
            vocab_size: dataset.vocab.len(),
            num_users: train.num_users(),
            num_items: dataset.num_items(),
            num_tags: if cfg.multi_task { dataset.tags.num_tags() } else { 0 },
            encoder: cfg.encoder.clone(),
        };
        Ok(Trainer {
            docs: &dataset.docs,
            tags: cfg.multi_task.then_some(&dataset.tags),
            candidates: split.active_items(),
            cfg,
            train,
            monitor_held,
            monitor_train,
            monitor,
            sampler,
            shape,
            validation_items,
            overrides: Vec::new(),
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Fresh parameters and optimizer state.
    pub fn initial_state(&self) -> TrainState {
        let model = Model::init(self.shape.clone(), &mut seeded_rng(self.cfg.seed));
        let mut rng = seeded_rng(self.cfg.seed);
        rng.set_stream(STREAM_TRAIN);
        let adam = new_adam(self.cfg.adam, &model.params);
        TrainState {
            model,
            adam,
            rng,
            updates: 0,
            history: Vec::new(),
            best: None,
            evals_since_best: 0,
            loss_sum: 0.0,
            loss_count: 0,
        }
    }

    /// Recall@monitor_m of `model` on the monitored held-out likes.
    pub fn monitor_recall(&self, model: &Model) -> f64 {
        let (rows, _) = evaluate_users(
            model,
            self.docs,
            &self.monitor_train,
            &self.monitor_held,
            &self.candidates,
            &[],
            &[self.cfg.monitor_m],
        );
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| r.recall[0]).sum::<f64>() / rows.len() as f64
    }

    /// One Adam update on a fresh batch. Returns the batch objective, or an
    /// error if the loss or a gradient is not finite (parameters untouched).
    pub fn step(&self, state: &mut TrainState) -> Result<f64> {
        let batch = self.sampler.sample(&self.train, self.cfg.batch_users, &mut state.rng);
        let mut grads = state.model.params.zeros_like();
        let obj = state.model.objective(
            &batch,
            self.docs,
            self.tags,
            &self.cfg.loss,
            Some(&mut state.rng),
            Some(&mut grads),
        );
        if !obj.total.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {} at update {}",
                obj.total,
                state.updates + 1
            )));
        }
        if let Some(max) = self.cfg.clip_norm {
            let norm = grads.group_tensors().iter().map(|t| t.sum_squares()).sum::<f64>().sqrt();
            if norm > max {
                for t in grads.group_tensors_mut() {
                    t.scale(max / norm);
                }
            }
        }
        let names = state.model.params.group_names();
        let mut params = state.model.params.group_tensors_mut();
        state.adam.step(&names, &mut params, &grads.group_tensors())?;
        state.updates += 1;
        Ok(obj.total)
    }

    fn evaluate_point(&self, state: &mut TrainState) -> bool {
        let recall = self.monitor_recall(&state.model);
        let train_loss = if state.loss_count > 0 {
            state.loss_sum / state.loss_count as f64
        } else {
            f64::NAN
        };
        state.loss_sum = 0.0;
        state.loss_count = 0;
        log::info!(
            "update {:>6}  loss {:.6}  recall@{} {:.4}",
            state.updates,
            train_loss,
            self.cfg.monitor_m,
            recall
        );
        state.history.push(EvalPoint {
            update: state.updates,
            train_loss,
            recall,
        });
        let improved = state.best.as_ref().is_none_or(|b| recall > b.recall);
        if improved {
            state.best = Some(Best {
                update: state.updates,
                recall,
                params: state.model.params.clone(),
            });
            state.evals_since_best = 0;
        } else {
            state.evals_since_best += 1;
        }
        improved
    }

    /// Run updates until `max_updates`, early stopping or a non-finite step.
    pub fn run(&self, mut state: TrainState) -> TrainOutcome {
        let mut stop = StopReason::MaxUpdates;
        while state.updates < self.cfg.max_updates {
            match self.step(&mut state) {
                Ok(loss) => {
                    state.loss_sum += loss;
                    state.loss_count += 1;
                }
                Err(e) => {
                    log::warn!("stopping: {e}");
                    stop = StopReason::NonFinite;
                    break;
                }
            }
            if state.updates.is_multiple_of(self.cfg.eval_every) || state.updates == self.cfg.max_updates {
                self.evaluate_point(&mut state);
                if state.evals_since_best >= self.cfg.patience {
                    stop = StopReason::EarlyStop;
                    break;
                }
            }
        }
        if state.best.is_none() {
            // aborted before the first evaluation: the last finite parameters
            self.evaluate_point(&mut state);
        }
        let best = state.best.as_ref().expect("at least one evaluation");
        let report = TrainReport {
            history: state.history.clone(),
            best_update: best.update,
            best_recall: best.recall,
            stop_reason: stop,
            updates: state.updates,
            monitor: self.monitor,
            monitor_m: self.cfg.monitor_m,
            validation_items: self.validation_items,
            skipped_users: self.sampler.skipped_users(),
            overrides: self.overrides.clone(),
        };
        TrainOutcome {
            best: Model::new(self.shape.clone(), best.params.clone()),
            report,
            state,
        }
    }

    /// Restore a state saved by [`TrainOutcome::last_checkpoint`]. Changed
    /// config keys are allowed and recorded in the report; the checkpoint
    /// must match this trainer's parameter shapes.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<TrainState> {
        let meta = &ck.meta;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("last") {
            return Err(Error::Checkpoint("not a resumable checkpoint".into()));
        }
        let params = ModelParams::from_checkpoint(ck, &self.shape)?;
        let names = params.group_names();
        let mut adam = new_adam(self.cfg.adam, &params);
        adam.step = field(meta, "adam_step")?;
        for (name, m) in names.iter().zip(&mut adam.moments) {
            let shape = m.first.shape().to_vec();
            *m = Moments {
                first: ck.expect(&format!("adam.m.{name}"), &shape)?.clone(),
                second: ck.expect(&format!("adam.v.{name}"), &shape)?.clone(),
            };
        }
        let best = match meta.get("best_update").and_then(|v| v.as_u64()) {
            Some(update) => {
                let mut best = params.zeros_like();
                for (name, t) in names.iter().zip(best.group_tensors_mut()) {
                    *t = ck.expect(&format!("best.{name}"), t.shape())?.clone();
                }
                Some(Best {
                    update,
                    recall: field(meta, "best_recall")?,
                    params: best,
                })
            }
            None => None,
        };
        let rng_seed: String = field(meta, "rng_seed")?;
        let seed_bytes = hex_decode(&rng_seed)?;
        let mut rng = SeededRng::from_seed(seed_bytes);
        rng.set_stream(field(meta, "rng_stream")?);
        let word_pos: String = field(meta, "rng_word_pos")?;
        rng.set_word_pos(
            word_pos
                .parse::<u128>()
                .map_err(|_| Error::Checkpoint("bad rng position".into()))?,
        );
        if let Some(old) = meta.get("config") {
            self.overrides = changed_keys(old, &serde_json::to_value(&self.cfg)?, "");
            if !self.overrides.is_empty() {
                log::info!("resuming with changed settings: {}", self.overrides.join(", "));
            }
        }
        Ok(TrainState {
            model: Model::new(self.shape.clone(), params),
            adam,
            rng,
            updates: field(meta, "updates")?,
            history: field(meta, "history")?,
            best,
            evals_since_best: field(meta, "evals_since_best")?,
            loss_sum: field(meta, "loss_sum")?,
            loss_count: field(meta, "loss_count")?,
        })
    }
}

fn new_adam(cfg: AdamConfig, params: &ModelParams) -> AdamState {
    let shapes: Vec<Vec<usize>> = params.group_tensors().iter().map(|t| t.shape().to_vec()).collect();
    let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    AdamState::new(cfg, &refs)
}

fn field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("checkpoint metadata lacks `{key}`")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Checkpoint(format!("bad `{key}`: {e}")))
}

fn hex_decode(s: &str) -> Result<[u8; 32]> {
    let bad = || Error::Checkpoint("bad rng seed".into());
    if s.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (k, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * k..2 * k + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

/// Dotted paths of leaves that differ between two JSON values.
fn changed_keys(old: &serde_json::Value, new: &serde_json::Value, prefix: &str) -> Vec<String> {
    match (old, new) {
        (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
            let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
            keys.sort();
            keys.dedup();
            keys.into_iter()
                .flat_map(|k| {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    let null = serde_json::Value::Null;
                    changed_keys(a.get(k).unwrap_or(&null), b.get(k).unwrap_or(&null), &path)
                })
                .collect()
        }
        _ if old == new => Vec::new(),
        _ => vec![prefix.to_string()],
    }
}

impl TrainOutcome {
    /// Model-only checkpoint of the best parameters, with enough metadata
    /// to evaluate it.
    pub fn best_checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        self.best.params.to_checkpoint(json!({
            "kind": "best",
            "shape": self.best.shape,
            "config": cfg,
            "update": self.report.best_update,
            "recall": self.report.best_recall,
        }))
    }

    /// Full resumable state: parameters, Adam moments, best parameters,
    /// RNG position and loop counters.
    pub fn last_checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        let s = &self.state;
        let best = s.best.as_ref();
        let rng_seed: String = s.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        let mut ck = s.model.params.to_checkpoint(json!({
            "kind": "last",
            "shape": s.model.shape,
            "config": cfg,
            "updates": s.updates,
            "adam_step": s.adam.step,
            "history": s.history,
            "best_update": best.map(|b| b.update),
            "best_recall": best.map(|b| b.recall),
            "evals_since_best": s.evals_since_best,
            "loss_sum": s.loss_sum,
            "loss_count": s.loss_count,
            "rng_seed": rng_seed,
            "rng_stream": s.rng.get_stream(),
            "rng_word_pos": s.rng.get_word_pos().to_string(),
        }));
        let names = s.model.params.group_names();
        for (name, m) in names.iter().zip(&s.adam.moments) {
            ck.push(format!("adam.m.{name}"), m.first.clone());
            ck.push(format!("adam.v.{name}"), m.second.clone());
        }
        if let Some(b) = best {
            for (name, t) in names.iter().zip(b.params.group_tensors()) {
                ck.push(format!("best.{name}"), Tensor::clone(t));
            }
        }
        ck
    }

    /// Write config, report and both checkpoints into `dir`.
    pub fn save(&self, dir: &Path, cfg: &TrainConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)?)?;
        fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&self.report)?)?;
        self.best_checkpoint(cfg).save(&dir.join(BEST_CHECKPOINT))?;
        self.last_checkpoint(cfg).save(&dir.join(LAST_CHECKPOINT))?;
        Ok(())
    }
}

/// Train from scratch on `split`.
pub fn train(dataset: &Dataset, split: &FoldSplit, cfg: TrainConfig) -> Result<TrainOutcome> {
    let trainer = Trainer::new(dataset, split, cfg)?;
    let state = trainer.initial_state();
    Ok(trainer.run(state))
}

/// Continue from a resumable checkpoint under `cfg` (which may raise
/// `max_updates` or change optimizer settings).
pub fn resume(dataset: &Dataset, split: &FoldSplit, cfg: TrainConfig, ck: &Checkpoint) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, split, cfg)?;
    let mut state = trainer.restore(ck)?;
    state.adam.config = trainer.cfg.adam;
    Ok(trainer.run(state))
}

/// Shape and config recorded in a checkpoint written by this module.
pub fn checkpoint_shape(ck: &Checkpoint) -> Result<ModelShape> {
    field(&ck.meta, "shape")
}

pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    field(&ck.meta, "config")
}

/// Load a model from a checkpoint, validating every group.
pub fn load_model(ck: &Checkpoint) -> Result<Model> {
    let shape = checkpoint_shape(ck)?;
    let params = ModelParams::from_checkpoint(ck, &shape)?;
    Ok(Model::new(shape, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lists(sizes: &[usize]) -> InteractionSet {
        let lists = sizes.iter().map(|&n| (0..n as u32).collect()).collect();
        InteractionSet::from_lists(40, lists).unwrap()
    }

    #[test]
    fn validation_sizes() {
        let train = lists(&[9, 20, 10, 40]);
        let (kept, val) = split_validation(&train, 0.05, 10, 3).unwrap();
        assert_eq!(val.iter().map(Vec::len).collect::<Vec<_>>(), vec![0, 1, 1, 2]);
        for (u, v) in val.iter().enumerate() {
            assert_eq!(kept.positives(u).len() + v.len(), train.positives(u).len());
            for j in v {
                assert!(!kept.is_positive(u, *j));
            }
        }
        assert_eq!(split_validation(&train, 0.05, 10, 3).unwrap().1, val);
    }

    #[test]
    fn zero_updates_rejected() {
        let cfg = TrainConfig {
            max_updates: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            loss: LossConfig { lambda: 1.5, ..Default::default() },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn changed_keys_are_dotted_paths() {
        let a = json!({"adam": {"learning_rate": 0.001, "beta1": 0.9}, "seed": 1});
        let b = json!({"adam": {"learning_rate": 0.01, "beta1": 0.9}, "seed": 1});
        assert_eq!(changed_keys(&a, &b, ""), vec!["adam.learning_rate".to_string()]);
    }
}
