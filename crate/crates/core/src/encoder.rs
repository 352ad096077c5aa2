//! Text encoders mapping a document to its content vector `g`.
//!
//! The GRU pipeline is: embed → dropout → bidirectional GRU → concatenate
//! per position → dropout → GRU → dropout → mean over positions. Dropout
//! masks are drawn independently for every position. Empty documents
//! encode to the zero vector for both encoders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::Document;
use crate::params::{GruStack, ModelParams};
use crate::tensor::gru::{sequence_backward, sequence_forward, Direction, SequenceRun};
use crate::tensor::ops::{check_dropout_rate, mean_pool, sample_mask, DropoutMask};
use crate::tensor::Tensor;
use crate::{Error, Result, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Average,
    Gru,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Average => "average",
            EncoderKind::Gru => "gru",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(EncoderKind::Average),
            "gru" => Ok(EncoderKind::Gru),
            _ => Err(Error::config(format!("unknown encoder `{s}` (average|gru)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub word_dim: usize,
    pub hidden1: usize,
    /// Output size of the top GRU layer; equals the factor dimension.
    pub hidden2: usize,
    pub dropout_embed: f64,
    pub dropout_layer1: f64,
    pub dropout_layer2: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Gru,
            word_dim: 200,
            hidden1: 400,
            hidden2: 200,
            dropout_embed: 0.1,
            dropout_layer1: 0.5,
            dropout_layer2: 0.3,
        }
    }
}

impl EncoderConfig {
    /// Custom dimensions with the default dropout rates.
    pub fn small(kind: EncoderKind, word_dim: usize, hidden1: usize, hidden2: usize) -> Self {
        EncoderConfig {
            kind,
            word_dim,
            hidden1,
            hidden2,
            ..Default::default()
        }
    }

    pub fn without_dropout(mut self) -> Self {
        self.dropout_embed = 0.0;
        self.dropout_layer1 = 0.0;
        self.dropout_layer2 = 0.0;
        self
    }

    /// Dimension of `g`, and so of every user, item and tag vector.
    pub fn factor_dim(&self) -> usize {
        match self.kind {
            EncoderKind::Average => self.word_dim,
            EncoderKind::Gru => self.hidden2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || (self.kind == EncoderKind::Gru && (self.hidden1 == 0 || self.hidden2 == 0)) {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        check_dropout_rate(self.dropout_embed)?;
        check_dropout_rate(self.dropout_layer1)?;
        check_dropout_rate(self.dropout_layer2)
    }
}

/// How a forward pass is run.
pub enum Pass<'a> {
    /// Deterministic, no cache.
    Inference,
    /// Keep everything needed for backprop; dropout is applied only when an
    /// RNG is supplied.
    Train { dropout: Option<&'a mut SeededRng> },
}

impl Pass<'_> {
    fn keeps_cache(&self) -> bool {
        matches!(self, Pass::Train { .. })
    }
}

/// Boxing the large variant would only add an allocation per document.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum EncoderCache {
    Empty,
    Average {
        tokens: Vec<u32>,
    },
    Gru {
        tokens: Vec<u32>,
        embed_masks: Vec<DropoutMask>,
        fwd: SequenceRun,
        bwd: SequenceRun,
        layer1_masks: Vec<DropoutMask>,
        top: SequenceRun,
        layer2_masks: Vec<DropoutMask>,
    },
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub g: Vec<f64>,
    pub cache: Option<EncoderCache>,
}

/// Mean of the document's embedding rows.
pub fn encode_average(doc: &Document, table: &Tensor) -> EncoderOutput {
    let dim = table.cols();
    if doc.is_empty() {
        return EncoderOutput {
            g: vec![0.0; dim],
            cache: Some(EncoderCache::Empty),
        };
    }
    // summing in sorted id order makes the result exactly order-free
    let mut sorted = doc.tokens.clone();
    sorted.sort_unstable();
    let mut g = vec![0.0; dim];
    for &t in &sorted {
        for (acc, v) in g.iter_mut().zip(table.row(t as usize)) {
            *acc += v;
        }
    }
    let inv = 1.0 / doc.len() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    EncoderOutput {
        g,
        cache: Some(EncoderCache::Average {
            tokens: doc.tokens.clone(),
        }),
    }
}

fn mask_for(rate: f64, len: usize, rng: &mut Option<&mut SeededRng>) -> DropoutMask {
    match rng {
        Some(r) if rate > 0.0 => sample_mask(len, rate, *r),
        _ => DropoutMask::ones(len),
    }
}

pub fn encode_gru(
    doc: &Document,
    table: &Tensor,
    stack: &GruStack,
    cfg: &EncoderConfig,
    pass: Pass<'_>,
) -> EncoderOutput {
    let k = cfg.hidden2;
    let keep = pass.keeps_cache();
    if doc.is_empty() {
        return EncoderOutput {
            g: vec![0.0; k],
            cache: keep.then_some(EncoderCache::Empty),
        };
    }
    let mut rng = match pass {
        Pass::Train { dropout } => dropout,
        Pass::Inference => None,
    };
    let h1 = cfg.hidden1;
    let n = doc.len();

    let mut embed_masks = Vec::with_capacity(n);
    let inputs: Vec<Vec<f64>> = doc
        .tokens
        .iter()
        .map(|&t| {
            let mut e = table.row(t as usize).to_vec();
            let m = mask_for(cfg.dropout_embed, e.len(), &mut rng);
            m.apply(&mut e);
            embed_masks.push(m);
            e
        })
        .collect();

    let zero1 = vec![0.0; h1];
    let fwd = sequence_forward(&inputs, &stack.fwd, Direction::Forward, &zero1);
    let bwd = sequence_forward(&inputs, &stack.bwd, Direction::Backward, &zero1);

    let mut layer1_masks = Vec::with_capacity(n);
    let concat: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let mut x = Vec::with_capacity(2 * h1);
            x.extend_from_slice(&fwd.states[t]);
            x.extend_from_slice(&bwd.states[t]);
            let m = mask_for(cfg.dropout_layer1, x.len(), &mut rng);
            m.apply(&mut x);
            layer1_masks.push(m);
            x
        })
        .collect();

    let top = sequence_forward(&concat, &stack.top, Direction::Forward, &vec![0.0; k]);
    let mut layer2_masks = Vec::with_capacity(n);
    let outputs: Vec<Vec<f64>> = top
        .states
        .iter()
        .map(|h| {
            let mut y = h.clone();
            let m = mask_for(cfg.dropout_layer2, y.len(), &mut rng);
            m.apply(&mut y);
            layer2_masks.push(m);
            y
        })
        .collect();
    let g = mean_pool(&outputs);

    EncoderOutput {
        g,
        cache: keep.then(|| EncoderCache::Gru {
            tokens: doc.tokens.clone(),
            embed_masks,
            fwd,
            bwd,
            layer1_masks,
            top,
            layer2_masks,
        }),
    }
}

/// Encode with whichever encoder the parameters carry.
pub fn encode(doc: &Document, params: &ModelParams, cfg: &EncoderConfig, pass: Pass<'_>) -> EncoderOutput {
    match (&cfg.kind, &params.gru) {
        (EncoderKind::Average, _) => {
            let mut out = encode_average(doc, &params.embeddings);
            if !pass.keeps_cache() {
                out.cache = None;
            }
            out
        }
        (EncoderKind::Gru, Some(stack)) => encode_gru(doc, &params.embeddings, stack, cfg, pass),
        (EncoderKind::Gru, None) => panic!("GRU encoder requested but the model has no GRU parameters"),
    }
}

/// Backpropagate `d_g` into `grads`. Returns the gradient with respect to
/// each position's (pre-dropout) word embedding.
pub fn backward(
    cache: &EncoderCache,
    d_g: &[f64],
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Vec<Vec<f64>> {
    match cache {
        EncoderCache::Empty => Vec::new(),
        EncoderCache::Average { tokens } => {
            let n = tokens.len() as f64;
            let share: Vec<f64> = d_g.iter().map(|d| d / n).collect();
            for &t in tokens {
                for (acc, s) in grads.embeddings.row_mut(t as usize).iter_mut().zip(&share) {
                    *acc += s;
                }
            }
            vec![share; tokens.len()]
        }
        EncoderCache::Gru {
            tokens,
            embed_masks,
            fwd,
            bwd,
            layer1_masks,
            top,
            layer2_masks,
        } => {
            let stack = params.gru.as_ref().expect("GRU cache without GRU parameters");
            let g_stack = grads.gru.as_mut().expect("GRU cache without GRU gradients");
            let n = tokens.len();
            let h1 = stack.fwd.hidden_dim();

            let d_top: Vec<Vec<f64>> = layer2_masks
                .iter()
                .map(|m| {
                    let mut d: Vec<f64> = d_g.iter().map(|v| v / n as f64).collect();
                    m.apply(&mut d);
                    d
                })
                .collect();
            let d_concat = sequence_backward(&d_top, top, &stack.top, &mut g_stack.top);

            let mut d_fwd = Vec::with_capacity(n);
            let mut d_bwd = Vec::with_capacity(n);
            for (mut d, m) in d_concat.into_iter().zip(layer1_masks) {
                m.apply(&mut d);
                d_bwd.push(d.split_off(h1));
                d_fwd.push(d);
            }
            let d_in_f = sequence_backward(&d_fwd, fwd, &stack.fwd, &mut g_stack.fwd);
            let d_in_b = sequence_backward(&d_bwd, bwd, &stack.bwd, &mut g_stack.bwd);

            let mut per_position = Vec::with_capacity(n);
            for t in 0..n {
                let mut d: Vec<f64> = d_in_f[t].iter().zip(&d_in_b[t]).map(|(a, b)| a + b).collect();
                embed_masks[t].apply(&mut d);
                for (acc, v) in grads.embeddings.row_mut(tokens[t] as usize).iter_mut().zip(&d) {
                    *acc += v;
                }
                per_position.push(d);
            }
            per_position
        }
    }
}

/// `f = g + v_j`; a missing offset (cold item) behaves as zero.
pub fn item_representation(g: &[f64], offset: Option<&[f64]>) -> Vec<f64> {
    match offset {
        None => g.to_vec(),
        Some(v) => {
            assert_eq!(g.len(), v.len(), "item offset dimension mismatch");
            g.iter().zip(v).map(|(a, b)| a + b).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelShape;
    use crate::seeded_rng;
    use crate::tensor::gradcheck::finite_difference_check;
    use crate::tensor::ParamGroups;

    fn doc(tokens: &[u32]) -> Document {
        Document {
            item_id: 0,
            tokens: tokens.to_vec(),
        }
    }

    fn gru_model(seed: u64, dims: (usize, usize, usize)) -> (ModelParams, EncoderConfig) {
        let cfg = EncoderConfig::small(EncoderKind::Gru, dims.0, dims.1, dims.2);
        let shape = ModelShape {
            vocab_size: 6,
            num_users: 1,
            num_items: 1,
            num_tags: 0,
            encoder: cfg.clone(),
        };
        let mut p = ModelParams::init(&shape, &mut seeded_rng(seed));
        // larger embeddings so that gradients are not vanishingly small
        let mut rng = seeded_rng(seed + 1000);
        p.embeddings = Tensor::uniform(&[6, dims.0], 1.0, &mut rng);
        (p, cfg)
    }

    #[test]
    fn average_examples() {
        let table = Tensor::matrix(3, 2, vec![1.0, 2.0, 0.5, -0.5, -1.0, -2.0]);
        assert_eq!(encode_average(&doc(&[1]), &table).g, vec![0.5, -0.5]);
        assert_eq!(encode_average(&doc(&[0, 2]), &table).g, vec![0.0, 0.0]);
        assert_eq!(encode_average(&doc(&[]), &table).g, vec![0.0, 0.0]);
        let a = encode_average(&doc(&[0, 1, 1, 2]), &table).g;
        let b = encode_average(&doc(&[1, 2, 0, 1]), &table).g;
        assert_eq!(a, b);
    }

    #[test]
    fn average_gradient_counts_repeats() {
        let (mut p, mut cfg) = gru_model(0, (2, 2, 2));
        cfg.kind = EncoderKind::Average;
        p.gru = None;
        let out = encode(&doc(&[3, 1, 3, 3]), &p, &cfg, Pass::Train { dropout: None });
        let mut grads = p.zeros_like();
        backward(out.cache.as_ref().unwrap(), &[1.0, -2.0], &p, &mut grads);
        // k/n · d_g with k = 3, n = 4
        assert_eq!(grads.embeddings.row(3), &[0.75, -1.5]);
        assert_eq!(grads.embeddings.row(1), &[0.25, -0.5]);
        assert_eq!(grads.embeddings.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn zero_gru_params_encode_to_zero() {
        let (mut p, cfg) = gru_model(1, (3, 2, 3));
        let stack = p.gru.as_mut().unwrap();
        for layer in [&mut stack.fwd, &mut stack.bwd, &mut stack.top] {
            *layer = layer.zeros_like();
        }
        let out = encode(&doc(&[0, 4, 2]), &p, &cfg, Pass::Inference);
        assert_eq!(out.g, vec![0.0; 3]);
        assert!(out.cache.is_none());
    }

    #[test]
    fn inference_is_deterministic_and_order_sensitive() {
        for seed in 0..5 {
            let (p, cfg) = gru_model(seed, (3, 4, 3));
            let a1 = encode(&doc(&[2, 3]), &p, &cfg, Pass::Inference).g;
            let a2 = encode(&doc(&[2, 3]), &p, &cfg, Pass::Inference).g;
            assert_eq!(a1, a2);
            let b = encode(&doc(&[3, 2]), &p, &cfg, Pass::Inference).g;
            let diff = a1.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff > 1e-9, "seed {seed}: diff {diff}");
        }
    }

    #[test]
    fn empty_document_short_circuits() {
        let (p, cfg) = gru_model(2, (3, 2, 3));
        let mut rng = seeded_rng(0);
        let out = encode(&doc(&[]), &p, &cfg, Pass::Train { dropout: Some(&mut rng) });
        assert_eq!(out.g, vec![0.0; 3]);
        let mut grads = p.zeros_like();
        assert!(backward(out.cache.as_ref().unwrap(), &[1.0; 3], &p, &mut grads).is_empty());
    }

    #[test]
    fn item_representation_examples() {
        assert_eq!(item_representation(&[1.0, 2.0], None), vec![1.0, 2.0]);
        assert_eq!(item_representation(&[0.0, 0.0], Some(&[3.0, -2.0])), vec![3.0, -2.0]);
        assert_eq!(item_representation(&[1.0, 2.0], Some(&[3.0, -2.0])), vec![4.0, 0.0]);
    }

    #[test]
    fn gru_encoder_gradients_match_finite_differences() {
        for seed in 0..10 {
            let (p, cfg) = gru_model(seed, (3, 4, 2));
            let tokens: Vec<u32> = (0..=(seed % 6) as u32).map(|t| (t * 5 + 1) % 6).collect();
            let d = doc(&tokens);
            let weights = [0.7, -1.3];
            let loss = |q: &ModelParams| {
                let g = encode(&d, q, &cfg, Pass::Inference).g;
                g.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
            };
            let out = encode(&d, &p, &cfg, Pass::Train { dropout: None });
            let mut grads = p.zeros_like();
            backward(out.cache.as_ref().unwrap(), &weights, &p, &mut grads);
            let report = finite_difference_check(loss, &p, &grads, 1e-5, 1e-4);
            assert!(report.passed(), "seed {seed}: {:?}", report.failing());
            assert_eq!(report.groups.len(), p.group_names().len());
        }
    }

    #[test]
    fn dropout_masks_flow_through_backward() {
        let (p, mut cfg) = gru_model(4, (3, 3, 2));
        cfg.dropout_embed = 0.3;
        cfg.dropout_layer1 = 0.4;
        cfg.dropout_layer2 = 0.2;
        let d = doc(&[1, 2, 5, 0]);
        let weights = [1.0, 0.5];
        let seed = 77;
        let loss = |q: &ModelParams| {
            let mut rng = seeded_rng(seed);
            let g = encode(&d, q, &cfg, Pass::Train { dropout: Some(&mut rng) }).g;
            g.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut rng = seeded_rng(seed);
        let out = encode(&d, &p, &cfg, Pass::Train { dropout: Some(&mut rng) });
        let mut grads = p.zeros_like();
        backward(out.cache.as_ref().unwrap(), &weights, &p, &mut grads);
        let report = finite_difference_check(loss, &p, &grads, 1e-5, 1e-4);
        assert!(report.passed(), "{:?}", report.failing());
    }
}
