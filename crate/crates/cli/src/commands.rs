//! One function per subcommand.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use textcf::encoder::EncoderKind;
use textcf::eval::{evaluate, evaluate_tags, rank_items, CandidatePool, Protocol};
use textcf::ingest::synthetic::{self, SyntheticConfig};
use textcf::ingest::{encode_document, prepare_from_files, prepare_synthetic, Dataset, Document, FoldSplit, PrepareSettings};
use textcf::recmodel::Model;
use textcf::saliency::{emit_heatmap, word_saliency, HeatmapFormat, SaliencyNorm};
use textcf::tensor::checkpoint::Checkpoint;
use textcf::toy::{ToyInstance, GRAD_CHECK_STEP, GRAD_CHECK_TOLERANCE};
use textcf::trainer::{checkpoint_config, load_model, TrainConfig, Trainer, LAST_CHECKPOINT};
use textcf::{Error, Result};

use crate::args::{EvaluateArgs, GradCheckArgs, PrepareArgs, RecommendArgs, RunArgs, SaliencyArgs, TrainArgs};
use crate::manifest::{bundle_hash, now, Artifacts, RunManifest, TOOL_VERSION};

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Refuse to write into a directory holding any of the inputs.
fn guard_inputs(out: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out) = out.canonicalize() else {
        return Ok(());
    };
    for input in inputs {
        if input.canonicalize().ok().and_then(|p| p.parent().map(Path::to_path_buf)) == Some(out.clone()) {
            return Err(Error::config(format!(
                "output directory {} contains input {}",
                out.display(),
                input.display()
            )));
        }
    }
    Ok(())
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let defaults = PrepareSettings::default();
    let settings = PrepareSettings {
        min_word_freq: a.min_word_freq.unwrap_or(defaults.min_word_freq),
        min_user_likes: a.min_user_likes.unwrap_or(defaults.min_user_likes),
        min_tag_items: a.min_tag_items.unwrap_or(defaults.min_tag_items),
        seed: a.seed.unwrap_or(defaults.seed),
    };
    let (dataset, source) = if a.synthetic {
        let d = SyntheticConfig::default();
        let cfg = SyntheticConfig {
            num_users: a.users.unwrap_or(d.num_users),
            num_items: a.items.unwrap_or(d.num_items),
            num_topics: a.topics.unwrap_or(d.num_topics),
            doc_len: a.doc_len.unwrap_or(d.doc_len),
            tag_noise: a.tag_noise.unwrap_or(d.tag_noise),
            seed: a.seed.unwrap_or(d.seed),
            ..d
        };
        let raw = synthetic::generate(&cfg);
        let raw_dir = a.out.join("raw");
        fs::create_dir_all(&raw_dir)?;
        fs::write(raw_dir.join("corpus.tsv"), raw.corpus_text())?;
        fs::write(raw_dir.join("likes.txt"), raw.likes_text())?;
        fs::write(raw_dir.join("tags.txt"), raw.tags_text())?;
        (prepare_synthetic(&cfg, settings)?, format!("synthetic {}", serde_json::to_string(&cfg)?))
    } else {
        let corpus = a.corpus.as_deref().ok_or_else(|| Error::config("--corpus is required"))?;
        let likes = a.likes.as_deref().ok_or_else(|| Error::config("--likes is required"))?;
        let mut inputs = vec![corpus, likes];
        inputs.extend(a.tags.as_deref());
        guard_inputs(&a.out, &inputs)?;
        let source = inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ");
        (prepare_from_files(corpus, likes, a.tags.as_deref(), settings)?, source)
    };
    dataset.save(&a.out, &source)?;
    println!(
        "prepared {} items, {} users, {} likes, {} tags, vocabulary {} -> {}",
        dataset.num_items(),
        dataset.interactions.num_users(),
        dataset.interactions.num_likes(),
        dataset.tags.num_tags(),
        dataset.vocab.len(),
        a.out.display()
    );
    Ok(())
}

fn set<T>(target: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *target = v;
    }
}

/// Flags on top of `cfg`.
fn apply_flags(cfg: &mut TrainConfig, a: &TrainArgs) -> Result<()> {
    if let Some(m) = &a.fold_mode {
        cfg.folds.mode = m.parse()?;
    }
    set(&mut cfg.folds.index, a.fold);
    set(&mut cfg.folds.num_folds, a.num_folds);
    set(&mut cfg.folds.seed, a.fold_seed);
    if let Some(e) = &a.encoder {
        cfg.encoder.kind = e.parse::<EncoderKind>()?;
    }
    set(&mut cfg.encoder.word_dim, a.word_dim);
    set(&mut cfg.encoder.hidden1, a.hidden1);
    set(&mut cfg.encoder.hidden2, a.hidden2);
    set(&mut cfg.encoder.dropout_embed, a.dropout_embed);
    set(&mut cfg.encoder.dropout_layer1, a.dropout_layer1);
    set(&mut cfg.encoder.dropout_layer2, a.dropout_layer2);
    set(&mut cfg.multi_task, a.mtl.map(|s| s.on()));
    set(&mut cfg.loss.lambda, a.lambda);
    set(&mut cfg.loss.alpha, a.alpha);
    set(&mut cfg.loss.epsilon, a.epsilon);
    set(&mut cfg.loss.neg_tag_weight, a.neg_tag_weight);
    set(&mut cfg.loss.l2_user, a.l2_user);
    set(&mut cfg.adam.learning_rate, a.lr);
    if a.clip_norm.is_some() {
        cfg.clip_norm = a.clip_norm;
    }
    set(&mut cfg.batch_users, a.batch_users);
    set(&mut cfg.max_updates, a.max_updates);
    set(&mut cfg.eval_every, a.eval_every);
    set(&mut cfg.patience, a.patience);
    set(&mut cfg.validation_fraction, a.validation_fraction);
    set(&mut cfg.monitor_m, a.monitor_m);
    set(&mut cfg.seed, a.seed);
    cfg.validate()
}

fn resume_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = if path.is_dir() { path.join(LAST_CHECKPOINT) } else { path.to_path_buf() };
    Checkpoint::load(&file)
}

/// Effective config: flags over the config file over the resumed run's
/// config over the defaults.
fn train_config(a: &TrainArgs, resumed: Option<&Checkpoint>) -> Result<TrainConfig> {
    let mut cfg = match resumed {
        Some(ck) => checkpoint_config(ck)?,
        None => TrainConfig::default(),
    };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path)?;
        let mut base = serde_json::to_value(&cfg)?;
        merge(&mut base, serde_json::from_str(&text)?);
        cfg = serde_json::from_value(base).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    }
    apply_flags(&mut cfg, a)?;
    Ok(cfg)
}

/// Overlay the keys present in `top` onto `base`.
fn merge(base: &mut serde_json::Value, top: serde_json::Value) {
    match (base, top) {
        (serde_json::Value::Object(b), serde_json::Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

pub fn train(a: &TrainArgs, threads: Option<usize>) -> Result<()> {
    let started = now();
    let resumed = a.resume.as_deref().map(resume_checkpoint).transpose()?;
    let cfg = train_config(a, resumed.as_ref())?;
    let dataset = Dataset::load(&a.data)?;
    let split = cfg.folds.split(&dataset.interactions)?;
    let mut trainer = Trainer::new(&dataset, &split, cfg.clone())?;
    let state = match &resumed {
        Some(ck) => {
            let mut s = trainer.restore(ck)?;
            s.adam.config = cfg.adam;
            s
        }
        None => {
            let mut s = trainer.initial_state();
            if let Some(path) = &a.embeddings {
                let n = s.model.params.load_pretrained_embeddings(&fs::read_to_string(path)?, &dataset.vocab)?;
                log::info!("initialized {n} word embeddings from {}", path.display());
            }
            s
        }
    };
    let outcome = trainer.run(state);
    outcome.save(&a.out, &cfg)?;
    let data = a.data.canonicalize().unwrap_or_else(|_| a.data.clone());
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        checkpoint_format: crate::manifest::checkpoint_format(),
        seed: cfg.seed,
        config: cfg,
        data_sha256: bundle_hash(&data)?,
        data,
        embeddings: a.embeddings.clone(),
        resumed_from: a.resume.clone(),
        threads,
        started,
        finished: now(),
        artifacts: Artifacts::default(),
    };
    manifest.save(&a.out)?;
    let r = &outcome.report;
    println!(
        "trained {} updates ({:?}); best recall@{} {:.4} at update {} -> {}",
        r.updates,
        r.stop_reason,
        r.monitor_m,
        r.best_recall,
        r.best_update,
        a.out.display()
    );
    Ok(())
}

/// A trained run with its dataset and fold.
struct LoadedRun {
    model: Model,
    config: TrainConfig,
    dataset: Dataset,
    split: FoldSplit,
}

fn load_run(a: &RunArgs) -> Result<LoadedRun> {
    let manifest = RunManifest::load(&a.run)?;
    let data = a.data.clone().unwrap_or_else(|| manifest.data.clone());
    let hash = bundle_hash(&data)?;
    if hash != manifest.data_sha256 {
        return Err(Error::config(format!(
            "bundle {} differs from the one the run was trained on",
            data.display()
        )));
    }
    let ck = Checkpoint::load(&a.run.join(&manifest.artifacts.best_checkpoint))?;
    let model = load_model(&ck)?;
    let dataset = Dataset::load(&data)?;
    if model.shape.vocab_size != dataset.vocab.len() || model.shape.num_items != dataset.num_items() {
        return Err(Error::Checkpoint("checkpoint does not match the bundle".into()));
    }
    let config = manifest.config;
    let split = config.folds.split(&dataset.interactions)?;
    Ok(LoadedRun {
        model,
        config,
        dataset,
        split,
    })
}

pub fn evaluate_run(a: &EvaluateArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let protocol: Protocol = match &a.protocol {
        Some(p) => p.parse()?,
        None => match run.config.folds.mode {
            textcf::ingest::FoldMode::Warm => Protocol::Warm,
            textcf::ingest::FoldMode::Cold => Protocol::Cold,
        },
    };
    let pool: CandidatePool = a.candidate_pool.parse()?;
    let report = match protocol {
        Protocol::Tags => {
            textcf::eval::check_protocol(run.split.mode, protocol)?;
            let s = &run.split;
            evaluate_tags(&run.model, &run.dataset.docs, &run.dataset.tags, &s.test_items, &s.test_items, s.fold, &a.m)?
        }
        _ => evaluate(&run.model, &run.dataset.docs, &run.split, protocol, &a.m, pool)?,
    };
    for s in &report.summary {
        log::info!("{} recall@{} {:.4}  hit-rank@{} {:.4}", protocol, s.m, s.recall, s.m, s.hit_rank);
    }
    let mut text = report.to_json()?;
    text.push('\n');
    write_output(a.out.as_deref(), &text)
}

fn read_item_texts(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

fn check_user(model: &Model, user: usize) -> Result<()> {
    if user >= model.shape.num_users {
        return Err(Error::Range(format!("user {user} out of range ({} users)", model.shape.num_users)));
    }
    Ok(())
}

pub fn recommend(a: &RecommendArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let model = &run.model;
    check_user(model, a.user)?;
    let mut out = String::from("rank\titem\tscore\n");
    let ranked = match &a.item_text {
        Some(path) => {
            let docs: Vec<Document> = read_item_texts(path)?
                .iter()
                .enumerate()
                .map(|(k, t)| encode_document(k as u32, t, &run.dataset.vocab))
                .collect();
            let ids: Vec<u32> = (0..docs.len() as u32).collect();
            let scores: Vec<f64> = docs
                .iter()
                .map(|d| model.score(a.user, 0, &model.content_vector(d), true))
                .collect();
            rank_items(a.user, &ids, &scores, &[])
        }
        None => {
            // held-out items of the run's fold are new to the model
            let cold = &run.split.test_items;
            let ids: Vec<u32> = (0..run.dataset.num_items() as u32).collect();
            let scores: Vec<f64> = ids
                .iter()
                .map(|&j| {
                    let is_cold = cold.binary_search(&j).is_ok();
                    let f = &model.item_vectors(&run.dataset.docs, &[j], is_cold)[0];
                    model.score(a.user, j, f, is_cold)
                })
                .collect();
            rank_items(a.user, &ids, &scores, run.split.train.positives(a.user))
        }
    };
    for (k, (j, s)) in ranked.items.iter().zip(&ranked.scores).take(a.top).enumerate() {
        out.push_str(&format!("{}\t{j}\t{s:.6}\n", k + 1));
    }
    write_output(None, &out)
}

pub fn saliency(a: &SaliencyArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    check_user(&run.model, a.user)?;
    let norm: SaliencyNorm = a.norm.parse()?;
    let format: HeatmapFormat = a.format.parse()?;
    let (doc, item) = match (&a.item_text, a.item) {
        (Some(path), _) => (encode_document(0, &fs::read_to_string(path)?, &run.dataset.vocab), None),
        (None, Some(j)) => {
            let doc = run
                .dataset
                .docs
                .get(j as usize)
                .ok_or_else(|| Error::Range(format!("item {j} out of range ({} items)", run.dataset.num_items())))?;
            // held-out items are scored as new items
            let item = run.split.test_items.binary_search(&j).is_err().then_some(j);
            (doc.clone(), item)
        }
        (None, None) => return Err(Error::config("give --item or --item-text")),
    };
    let map = word_saliency(&run.model, &run.dataset.vocab, a.user, item, &doc, norm)?;
    write_output(a.out.as_deref(), &emit_heatmap(&map, format))
}

/// Returns whether every group passed.
pub fn grad_check(a: &GradCheckArgs) -> Result<bool> {
    let kind: EncoderKind = a.encoder.parse()?;
    let report = ToyInstance::new(kind, a.seed).grad_check(GRAD_CHECK_STEP, GRAD_CHECK_TOLERANCE);
    println!("{:<22} {:>7} {:>12}  status", "group", "entries", "max rel err");
    for g in &report.groups {
        println!(
            "{:<22} {:>7} {:>12.3e}  {}",
            g.name,
            g.entries,
            g.max_rel_error,
            if g.passed { "ok" } else { "FAIL" }
        );
    }
    println!(
        "max relative error {:.3e} (tolerance {GRAD_CHECK_TOLERANCE:e}, step {GRAD_CHECK_STEP:e})",
        report.max_rel_error()
    );
    Ok(report.passed())
}
