//! The full set of trainable arrays and their naming.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderKind};
use crate::ingest::Vocabulary;
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::gru::GruParams;
use crate::tensor::{ParamGroups, Tensor};
use crate::{Error, Result};

pub const EMBEDDING_INIT: f64 = 0.05;
pub const FACTOR_INIT: f64 = 0.01;

/// Dimensions that fix every parameter shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub vocab_size: usize,
    pub num_users: usize,
    pub num_items: usize,
    /// Zero when the model has no tag head.
    pub num_tags: usize,
    pub encoder: EncoderConfig,
}

impl ModelShape {
    pub fn factor_dim(&self) -> usize {
        self.encoder.factor_dim()
    }
}

/// Layer-1 forward and backward cells plus the layer-2 cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GruStack {
    pub fwd: GruParams,
    pub bwd: GruParams,
    pub top: GruParams,
}

impl GruStack {
    fn zeros(cfg: &EncoderConfig) -> Self {
        GruStack {
            fwd: GruParams::zeros(cfg.word_dim, cfg.hidden1),
            bwd: GruParams::zeros(cfg.word_dim, cfg.hidden1),
            top: GruParams::zeros(2 * cfg.hidden1, cfg.hidden2),
        }
    }

    fn init(cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        GruStack {
            fwd: GruParams::init(cfg.word_dim, cfg.hidden1, rng),
            bwd: GruParams::init(cfg.word_dim, cfg.hidden1, rng),
            top: GruParams::init(2 * cfg.hidden1, cfg.hidden2, rng),
        }
    }
}

/// User and item latent factors and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorParams {
    pub user_factors: Tensor,
    pub item_offsets: Tensor,
    pub user_bias: Tensor,
    pub item_bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub embeddings: Tensor,
    pub gru: Option<GruStack>,
    pub factors: FactorParams,
    pub tags: Option<Tensor>,
}

impl ModelParams {
    /// All-zero arrays of the right shapes (used as gradient buffers).
    pub fn zeros(shape: &ModelShape) -> Self {
        let k = shape.factor_dim();
        ModelParams {
            embeddings: Tensor::zeros(&[shape.vocab_size, shape.encoder.word_dim]),
            gru: (shape.encoder.kind == EncoderKind::Gru).then(|| GruStack::zeros(&shape.encoder)),
            factors: FactorParams {
                user_factors: Tensor::zeros(&[shape.num_users, k]),
                item_offsets: Tensor::zeros(&[shape.num_items, k]),
                user_bias: Tensor::zeros(&[shape.num_users]),
                item_bias: Tensor::zeros(&[shape.num_items]),
            },
            tags: (shape.num_tags > 0).then(|| Tensor::zeros(&[shape.num_tags, k])),
        }
    }

    /// Word embeddings uniform in ±0.05, GRU matrices scaled-uniform,
    /// biases zero, user/item/tag factors uniform in ±0.01.
    pub fn init(shape: &ModelShape, rng: &mut impl Rng) -> Self {
        let k = shape.factor_dim();
        let embeddings =
            Tensor::uniform(&[shape.vocab_size, shape.encoder.word_dim], EMBEDDING_INIT, rng);
        let gru = (shape.encoder.kind == EncoderKind::Gru).then(|| GruStack::init(&shape.encoder, rng));
        let factors = FactorParams {
            user_factors: Tensor::uniform(&[shape.num_users, k], FACTOR_INIT, rng),
            item_offsets: Tensor::uniform(&[shape.num_items, k], FACTOR_INIT, rng),
            user_bias: Tensor::zeros(&[shape.num_users]),
            item_bias: Tensor::zeros(&[shape.num_items]),
        };
        let tags = (shape.num_tags > 0).then(|| Tensor::uniform(&[shape.num_tags, k], FACTOR_INIT, rng));
        ModelParams {
            embeddings,
            gru,
            factors,
            tags,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.group_tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.group_tensors().iter().all(|t| t.is_finite())
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new(meta);
        for (name, t) in self.group_names().into_iter().zip(self.group_tensors()) {
            ck.push(name, t.clone());
        }
        ck
    }

    /// Rebuild from a checkpoint, validating every group against `shape`.
    pub fn from_checkpoint(ck: &Checkpoint, shape: &ModelShape) -> Result<Self> {
        let mut params = ModelParams::zeros(shape);
        let names = params.group_names();
        for (name, t) in names.iter().zip(params.group_tensors_mut()) {
            let stored = ck.expect(name, t.shape())?;
            *t = stored.clone();
        }
        Ok(params)
    }

    /// Overwrite embedding rows from a `token<TAB>v₁ v₂ …` text file. Tokens
    /// missing from the vocabulary are ignored. Returns the number of rows
    /// replaced.
    pub fn load_pretrained_embeddings(&mut self, text: &str, vocab: &Vocabulary) -> Result<usize> {
        let dim = self.embeddings.cols();
        let mut loaded = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (tok, rest) = line.split_once('\t').ok_or(Error::Parse {
                line: n + 1,
                msg: "expected `token<TAB>values`".into(),
            })?;
            let values: Vec<f64> = rest
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        line: n + 1,
                        msg: format!("bad value `{v}`"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::config(format!(
                    "pretrained embedding for `{tok}` has {} values, expected {dim}",
                    values.len()
                )));
            }
            if let Some(id) = vocab.id(tok) {
                self.embeddings.row_mut(id as usize).copy_from_slice(&values);
                loaded += 1;
            }
        }
        Ok(loaded)
    }
}

const GRU_LAYERS: [&str; 3] = ["gru1_fwd", "gru1_bwd", "gru2"];

impl ParamGroups for ModelParams {
    fn group_names(&self) -> Vec<String> {
        let mut names = vec!["word_embeddings".to_string()];
        if self.gru.is_some() {
            for layer in GRU_LAYERS {
                for g in GruParams::GROUP_NAMES {
                    names.push(format!("{layer}.{g}"));
                }
            }
        }
        names.extend(
            ["user_factors", "item_offsets", "user_bias", "item_bias"]
                .iter()
                .map(|s| s.to_string()),
        );
        if self.tags.is_some() {
            names.push("tag_embeddings".into());
        }
        names
    }

    fn group_tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embeddings];
        if let Some(g) = &self.gru {
            for layer in [&g.fwd, &g.bwd, &g.top] {
                out.extend(layer.tensors());
            }
        }
        let f = &self.factors;
        out.extend([&f.user_factors, &f.item_offsets, &f.user_bias, &f.item_bias]);
        if let Some(t) = &self.tags {
            out.push(t);
        }
        out
    }

    fn group_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embeddings];
        if let Some(g) = &mut self.gru {
            for layer in [&mut g.fwd, &mut g.bwd, &mut g.top] {
                out.extend(layer.tensors_mut());
            }
        }
        let f = &mut self.factors;
        out.extend([
            &mut f.user_factors,
            &mut f.item_offsets,
            &mut f.user_bias,
            &mut f.item_bias,
        ]);
        if let Some(t) = &mut self.tags {
            out.push(t);
        }
        out
    }
}
