//! The full model: encoder plus factors, its training objective with
//! gradients, and evaluation-mode scoring.

use rayon::prelude::*;
use serde::Serialize;

use super::{confidence_weight, predict_rating, rating_loss, tag_loss, LossConfig, RatingRow, TagTerm, TrainBatch};
use crate::encoder::{self, EncoderOutput, Pass};
use crate::ingest::{Document, TagSet};
use crate::params::{ModelParams, ModelShape};
use crate::tensor::{axpy, dot};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub shape: ModelShape,
    pub params: ModelParams,
}

/// Loss components of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Objective {
    pub total: f64,
    /// `C_R` including the user penalty.
    pub rating: f64,
    /// `C_T`, present when the tag loss is active.
    pub tag: Option<f64>,
}

impl Model {
    pub fn new(shape: ModelShape, params: ModelParams) -> Self {
        Model { shape, params }
    }

    pub fn init(shape: ModelShape, rng: &mut SeededRng) -> Self {
        let params = ModelParams::init(&shape, rng);
        Model { shape, params }
    }

    pub fn has_tags(&self) -> bool {
        self.params.tags.is_some()
    }

    /// Batch objective. With `tags` present, `C = λ·C_R + (1 − λ)·C_T`;
    /// otherwise `C = C_R`. When `grads` is given, the gradient of `C` is
    /// accumulated into it. `dropout` enables training-mode dropout.
    pub fn objective(
        &self,
        batch: &TrainBatch,
        docs: &[Document],
        tags: Option<&TagSet>,
        loss: &LossConfig,
        mut dropout: Option<&mut SeededRng>,
        grads: Option<&mut ModelParams>,
    ) -> Objective {
        let p = &self.params;
        let cfg = &self.shape.encoder;
        let tags = tags.filter(|_| p.tags.is_some());
        let (w_rating, w_tag) = match tags {
            Some(_) => (loss.lambda, 1.0 - loss.lambda),
            None => (1.0, 0.0),
        };

        // encode every distinct item once, in ascending id order
        let items = batch.items();
        let encoded: Vec<EncoderOutput> = items
            .iter()
            .map(|&j| {
                let rng = dropout.as_deref_mut();
                encoder::encode(&docs[j as usize], p, cfg, Pass::Train { dropout: rng })
            })
            .collect();
        let slot = |j: u32| items.binary_search(&j).expect("item encoded");
        let f: Vec<Vec<f64>> = items
            .iter()
            .zip(&encoded)
            .map(|(&j, out)| encoder::item_representation(&out.g, Some(p.factors.item_offsets.row(j as usize))))
            .collect();

        // rating rows: positive then negative per triple
        let mut rows = Vec::with_capacity(2 * batch.len());
        for t in &batch.triples {
            let c = confidence_weight(t.num_likes, loss.alpha, loss.epsilon);
            for (j, r) in [(t.pos, 1.0), (t.neg, 0.0)] {
                rows.push(RatingRow {
                    predicted: self.rating(t.user, j, &f[slot(j)]),
                    target: r,
                    weight: c,
                });
            }
        }
        let (c_r, d_pred) = rating_loss(&rows);
        let mut users: Vec<usize> = batch.triples.iter().map(|t| t.user).collect();
        users.sort_unstable();
        users.dedup();
        let penalty: f64 = users
            .iter()
            .map(|&u| loss.l2_user * dot(p.factors.user_factors.row(u), p.factors.user_factors.row(u)))
            .sum();
        let rating = c_r + penalty;

        // tag terms over all tags of every batch item
        let tag_part = tags.map(|ts| {
            let table = p.tags.as_ref().expect("tag head");
            let n_tags = table.rows();
            let terms: Vec<TagTerm> = items
                .iter()
                .zip(&f)
                .flat_map(|(&j, fj)| {
                    (0..n_tags).map(move |l| TagTerm {
                        score: dot(fj, table.row(l)),
                        observed: ts.has_tag(j as usize, l as u32),
                    })
                })
                .collect();
            tag_loss(&terms, loss.neg_tag_weight)
        });

        let total = w_rating * rating + w_tag * tag_part.as_ref().map_or(0.0, |t| t.0);
        let objective = Objective {
            total,
            rating,
            tag: tag_part.as_ref().map(|t| t.0),
        };

        let Some(grads) = grads else {
            return objective;
        };

        let k = self.shape.factor_dim();
        let mut d_f = vec![vec![0.0; k]; items.len()];
        for (t, d) in batch.triples.iter().zip(d_pred.chunks(2)) {
            for (j, dr) in [(t.pos, d[0]), (t.neg, d[1])] {
                let dr = w_rating * dr;
                let s = slot(j);
                grads.factors.user_bias.data_mut()[t.user] += dr;
                grads.factors.item_bias.data_mut()[j as usize] += dr;
                axpy(dr, &f[s], grads.factors.user_factors.row_mut(t.user));
                axpy(dr, p.factors.user_factors.row(t.user), &mut d_f[s]);
            }
        }
        for &u in &users {
            axpy(
                w_rating * 2.0 * loss.l2_user,
                p.factors.user_factors.row(u),
                grads.factors.user_factors.row_mut(u),
            );
        }
        if let (Some((_, d_scores)), true) = (&tag_part, w_tag != 0.0) {
            let table = p.tags.as_ref().expect("tag head");
            let g_table = grads.tags.as_mut().expect("tag gradient");
            let n_tags = table.rows();
            for (s, fj) in f.iter().enumerate() {
                for l in 0..n_tags {
                    let ds = w_tag * d_scores[s * n_tags + l];
                    axpy(ds, table.row(l), &mut d_f[s]);
                    axpy(ds, fj, g_table.row_mut(l));
                }
            }
        }
        for ((&j, out), df) in items.iter().zip(&encoded).zip(&d_f) {
            axpy(1.0, df, grads.factors.item_offsets.row_mut(j as usize));
            let cache = out.cache.as_ref().expect("training pass keeps caches");
            encoder::backward(cache, df, p, grads);
        }
        objective
    }

    /// `b_i + b_j + ⟨u_i, f⟩` for an already computed item vector.
    pub fn rating(&self, user: usize, item: u32, f: &[f64]) -> f64 {
        let fp = &self.params.factors;
        predict_rating(fp.user_factors.row(user), fp.user_bias.data()[user], fp.item_bias.data()[item as usize], f)
    }

    /// Evaluation-mode content vector `g` of a document.
    pub fn content_vector(&self, doc: &Document) -> Vec<f64> {
        encoder::encode(doc, &self.params, &self.shape.encoder, Pass::Inference).g
    }

    /// Evaluation-mode item vectors. Cold items use no offset.
    pub fn item_vectors(&self, docs: &[Document], items: &[u32], cold: bool) -> Vec<Vec<f64>> {
        items
            .par_iter()
            .map(|&j| {
                let g = self.content_vector(&docs[j as usize]);
                let offset = (!cold).then(|| self.params.factors.item_offsets.row(j as usize));
                encoder::item_representation(&g, offset)
            })
            .collect()
    }

    /// Score of `user` for an item vector; cold items carry no item bias.
    pub fn score(&self, user: usize, item: u32, f: &[f64], cold: bool) -> f64 {
        if cold {
            let fp = &self.params.factors;
            predict_rating(fp.user_factors.row(user), fp.user_bias.data()[user], 0.0, f)
        } else {
            self.rating(user, item, f)
        }
    }
}
