//! A tiny fixed instance for gradient checking: 3 users, 4 items, 2 tags,
//! factor dimension 3, documents of at most 4 tokens, dropout off.

use rand::Rng;

use crate::encoder::{EncoderConfig, EncoderKind};
use crate::ingest::{Document, TagSet};
use crate::params::{ModelParams, ModelShape};
use crate::recmodel::{LossConfig, Model, TrainBatch, Triple};
use crate::tensor::gradcheck::{finite_difference_check, GradCheckReport};
use crate::tensor::ParamGroups;
use crate::seeded_rng;

pub const TOY_VOCAB: usize = 7;
pub const TOY_DIM: usize = 3;
pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Everything needed to evaluate the toy objective.
#[derive(Clone, Debug)]
pub struct ToyInstance {
    pub model: Model,
    pub docs: Vec<Document>,
    pub tags: TagSet,
    pub batch: TrainBatch,
    pub loss: LossConfig,
}

impl ToyInstance {
    /// Parameters are drawn from ±0.5 (wider than the training init) so
    /// that every gradient entry is well above finite-difference noise.
    pub fn new(kind: EncoderKind, seed: u64) -> Self {
        let encoder = EncoderConfig::small(kind, TOY_DIM, 2, TOY_DIM).without_dropout();
        let shape = ModelShape {
            vocab_size: TOY_VOCAB,
            num_users: 3,
            num_items: 4,
            num_tags: 2,
            encoder,
        };
        let mut rng = seeded_rng(seed);
        let mut params = ModelParams::init(&shape, &mut rng);
        for t in params.group_tensors_mut() {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let docs = vec![
            Document { item_id: 0, tokens: vec![2, 3, 4, 5] },
            Document { item_id: 1, tokens: vec![6, 2] },
            Document { item_id: 2, tokens: vec![3, 3, 0] },
            Document { item_id: 3, tokens: vec![1, 5, 6, 4] },
        ];
        let tags = TagSet::from_lists(2, vec![vec![0], vec![0, 1], vec![], vec![1]]).expect("toy tags");
        let batch = TrainBatch {
            triples: vec![
                Triple { user: 0, pos: 0, neg: 2, num_likes: 2 },
                Triple { user: 1, pos: 1, neg: 3, num_likes: 1 },
                Triple { user: 2, pos: 3, neg: 0, num_likes: 3 },
            ],
        };
        // unit confidence scale keeps the loss O(1)
        let loss = LossConfig {
            alpha: 1.0,
            neg_tag_weight: 0.5,
            ..Default::default()
        };
        ToyInstance {
            model: Model::new(shape, params),
            docs,
            tags,
            batch,
            loss,
        }
    }

    pub fn loss_at(&self, params: &ModelParams) -> f64 {
        let model = Model::new(self.model.shape.clone(), params.clone());
        model
            .objective(&self.batch, &self.docs, Some(&self.tags), &self.loss, None, None)
            .total
    }

    pub fn analytic_gradient(&self) -> ModelParams {
        let mut grads = self.model.params.zeros_like();
        self.model
            .objective(&self.batch, &self.docs, Some(&self.tags), &self.loss, None, Some(&mut grads));
        grads
    }

    /// Compare the analytic gradient of the full multi-task objective with
    /// central differences over every parameter group.
    pub fn grad_check(&self, step: f64, tolerance: f64) -> GradCheckReport {
        let analytic = self.analytic_gradient();
        finite_difference_check(|p| self.loss_at(p), &self.model.params, &analytic, step, tolerance)
    }
}

/// Grad-check the GRU toy instance at the default step and tolerance.
pub fn run_grad_check(seed: u64) -> GradCheckReport {
    ToyInstance::new(EncoderKind::Gru, seed).grad_check(GRAD_CHECK_STEP, GRAD_CHECK_TOLERANCE)
}
