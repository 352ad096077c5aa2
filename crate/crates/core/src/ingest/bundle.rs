//! Prepared dataset bundle: `bundle.bin`, `vocab.tsv` and `manifest.json`
//! inside one directory.
//!
//! `bundle.bin` is magic `CRD1` followed by little-endian `u32` sections:
//! documents, retained users, and item tags, each as length-prefixed lists.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{InteractionSet, TagSet};
use super::vocab::{Document, Vocabulary};
use crate::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 4] = b"CRD1";
pub const BUNDLE_FILE: &str = "bundle.bin";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareSettings {
    pub min_word_freq: usize,
    pub min_user_likes: usize,
    pub min_tag_items: usize,
    pub seed: u64,
}

impl Default for PrepareSettings {
    fn default() -> Self {
        PrepareSettings {
            min_word_freq: 5,
            min_user_likes: 5,
            min_tag_items: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub num_items: usize,
    pub num_users: usize,
    pub num_likes: usize,
    pub num_tags: usize,
    pub vocab_size: usize,
    pub settings: PrepareSettings,
    pub vocabulary_file: String,
    pub bundle_file: String,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub docs: Vec<Document>,
    pub interactions: InteractionSet,
    pub tags: TagSet,
    pub settings: PrepareSettings,
}

impl Dataset {
    pub fn num_items(&self) -> usize {
        self.docs.len()
    }

    pub fn manifest(&self, source: &str) -> BundleManifest {
        BundleManifest {
            num_items: self.num_items(),
            num_users: self.interactions.num_users(),
            num_likes: self.interactions.num_likes(),
            num_tags: self.tags.num_tags(),
            vocab_size: self.vocab.len(),
            settings: self.settings.clone(),
            vocabulary_file: VOCAB_FILE.into(),
            bundle_file: BUNDLE_FILE.into(),
            source: source.into(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(BUNDLE_MAGIC);
        w.u32(self.docs.len());
        for d in &self.docs {
            w.list(&d.tokens);
        }
        w.u32(self.interactions.num_users());
        for u in 0..self.interactions.num_users() {
            w.u32(self.interactions.source_user(u));
            w.list(self.interactions.positives(u));
        }
        w.u32(self.tags.num_tags());
        for &t in self.tags.source_tags() {
            w.u32(t as usize);
        }
        for j in 0..self.tags.num_items() {
            w.list(self.tags.tags(j));
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8], vocab: Vocabulary, settings: PrepareSettings) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != BUNDLE_MAGIC {
            return Err(Error::config("not a dataset bundle (bad magic)"));
        }
        let mut r = Reader { bytes, pos: 4 };
        let n_items = r.u32()? as usize;
        let mut docs = Vec::with_capacity(n_items);
        for j in 0..n_items {
            let tokens = r.list()?;
            if tokens.iter().any(|&t| t as usize >= vocab.len()) {
                return Err(Error::Range(format!("document {j} has a token outside the vocabulary")));
            }
            docs.push(Document {
                item_id: j as u32,
                tokens,
            });
        }
        let n_users = r.u32()? as usize;
        let mut sources = Vec::with_capacity(n_users);
        let mut lists = Vec::with_capacity(n_users);
        for _ in 0..n_users {
            sources.push(r.u32()? as usize);
            lists.push(r.list()?);
        }
        let interactions = InteractionSet::with_sources(n_items, lists, sources)?;
        let n_tags = r.u32()? as usize;
        let mut source_tags = Vec::with_capacity(n_tags);
        for _ in 0..n_tags {
            source_tags.push(r.u32()?);
        }
        let mut item_tags = Vec::with_capacity(n_items);
        for _ in 0..n_items {
            item_tags.push(r.list()?);
        }
        let tags = TagSet::from_lists(n_tags, item_tags)?.with_source_tags(source_tags)?;
        if r.pos != bytes.len() {
            return Err(Error::config("trailing bytes in dataset bundle"));
        }
        Ok(Dataset {
            vocab,
            docs,
            interactions,
            tags,
            settings,
        })
    }

    /// Write `bundle.bin`, `vocab.tsv` and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path, source: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(BUNDLE_FILE), self.to_bytes())?;
        fs::write(dir.join(VOCAB_FILE), self.vocab.to_tsv())?;
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest(source))?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let vocab = Vocabulary::from_tsv(&fs::read_to_string(dir.join(&manifest.vocabulary_file))?)?;
        let bytes = fs::read(dir.join(&manifest.bundle_file))?;
        let ds = Dataset::from_bytes(&bytes, vocab, manifest.settings.clone())?;
        if ds.num_items() != manifest.num_items
            || ds.interactions.num_users() != manifest.num_users
            || ds.tags.num_tags() != manifest.num_tags
        {
            return Err(Error::config("bundle contents disagree with its manifest"));
        }
        Ok(ds)
    }
}

impl TagSet {
    pub(crate) fn with_source_tags(mut self, source: Vec<u32>) -> Result<Self> {
        if source.len() != self.num_tags() {
            return Err(Error::config("tag source ids do not match tag count"));
        }
        self.set_source_tags(source);
        Ok(self)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("bundle values fit in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn list(&mut self, items: &[u32]) {
        self.u32(items.len());
        for &i in items {
            self.0.extend_from_slice(&i.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::config("truncated dataset bundle"))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
    }

    fn list(&mut self) -> Result<Vec<u32>> {
        let n = self.u32()? as usize;
        if n > (self.bytes.len() - self.pos) / 4 {
            return Err(Error::config("truncated dataset bundle"));
        }
        (0..n).map(|_| self.u32()).collect()
    }
}
