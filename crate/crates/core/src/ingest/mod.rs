//! Vocabulary, tokenized documents, likes and tags, folds, and the prepared
//! dataset bundle.

pub mod bundle;
pub mod data;
pub mod folds;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

use std::path::Path;

pub use bundle::{Dataset, PrepareSettings};
pub use data::{InteractionSet, TagSet};
pub use folds::{make_folds, FoldMode, FoldPlan, FoldSplit};
pub use vocab::{encode_document, Document, Vocabulary};

use crate::Result;

/// Build a dataset from in-memory corpus, likes and tags text.
pub fn prepare_from_text(
    corpus: &[String],
    likes: &str,
    tags: Option<&str>,
    settings: PrepareSettings,
) -> Result<Dataset> {
    let vocab = Vocabulary::build(corpus, settings.min_word_freq)?;
    let docs = corpus
        .iter()
        .enumerate()
        .map(|(j, t)| encode_document(j as u32, t, &vocab))
        .collect();
    let interactions = data::parse_likes(likes, corpus.len(), settings.min_user_likes)?;
    let tags = match tags {
        Some(t) => data::parse_tags(t, corpus.len(), settings.min_tag_items)?,
        None => TagSet::empty(corpus.len()),
    };
    Ok(Dataset {
        vocab,
        docs,
        interactions,
        tags,
        settings,
    })
}

pub fn prepare_from_files(
    corpus: &Path,
    likes: &Path,
    tags: Option<&Path>,
    settings: PrepareSettings,
) -> Result<Dataset> {
    let corpus = data::load_corpus(corpus)?;
    let likes = std::fs::read_to_string(likes)?;
    let tags = tags.map(std::fs::read_to_string).transpose()?;
    prepare_from_text(&corpus, &likes, tags.as_deref(), settings)
}

pub fn prepare_synthetic(
    cfg: &synthetic::SyntheticConfig,
    settings: PrepareSettings,
) -> Result<Dataset> {
    let data = synthetic::generate(cfg);
    prepare_from_text(
        &data.texts,
        &data.likes_text(),
        Some(&data.tags_text()),
        settings,
    )
}
