//! Rating prediction, the weighted rating loss, the tag loss and their
//! convex combination.

pub mod model;
pub mod sampler;

use serde::{Deserialize, Serialize};

pub use model::{Model, Objective};
pub use sampler::{sample_minibatch, Sampler, TrainBatch, Triple};

use crate::tensor::dot;
use crate::tensor::ops::sigmoid;
use crate::{Error, Result};

/// Probabilities are clamped to `[TAG_PROB_CLAMP, 1 - TAG_PROB_CLAMP]`
/// before taking logs.
pub const TAG_PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Confidence scale α.
    pub alpha: f64,
    /// Confidence offset ε.
    pub epsilon: f64,
    /// Weight of the rating loss; the tag loss gets `1 - lambda`.
    pub lambda: f64,
    /// Weight of unobserved tags.
    pub neg_tag_weight: f64,
    /// L2 penalty on the user vectors present in a batch.
    pub l2_user: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 10.0,
            epsilon: 1e-8,
            lambda: 0.5,
            neg_tag_weight: 0.01,
            l2_user: 0.01,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.alpha < 0.0 || self.epsilon <= 0.0 || self.neg_tag_weight < 0.0 || self.l2_user < 0.0 {
            return Err(Error::config(
                "alpha, neg_tag_weight and l2_user must be >= 0 and epsilon > 0",
            ));
        }
        Ok(())
    }
}

/// `b_i + b_j + ⟨u_i, f⟩`.
pub fn predict_rating(user: &[f64], user_bias: f64, item_bias: f64, item: &[f64]) -> f64 {
    assert_eq!(user.len(), item.len(), "user/item dimension mismatch");
    user_bias + item_bias + dot(user, item)
}

/// `1 + α·ln(1 + n/ε)`, shared by a user's positive and negative rows.
pub fn confidence_weight(num_likes: usize, alpha: f64, epsilon: f64) -> f64 {
    1.0 + alpha * (1.0 + num_likes as f64 / epsilon).ln()
}

pub fn tag_probability(item: &[f64], tag: &[f64]) -> f64 {
    assert_eq!(item.len(), tag.len(), "item/tag dimension mismatch");
    sigmoid(dot(item, tag))
}

/// `λ·C_R + (1 − λ)·C_T`.
pub fn combined_loss(lambda: f64, rating: f64, tag: f64) -> f64 {
    lambda * rating + (1.0 - lambda) * tag
}

/// One weighted squared-error row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingRow {
    pub predicted: f64,
    pub target: f64,
    pub weight: f64,
}

/// Mean weighted squared error over `rows` and its derivative with respect
/// to every prediction.
pub fn rating_loss(rows: &[RatingRow]) -> (f64, Vec<f64>) {
    if rows.is_empty() {
        return (0.0, Vec::new());
    }
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let grads = rows
        .iter()
        .map(|r| {
            let err = r.predicted - r.target;
            loss += r.weight * err * err;
            2.0 * r.weight * err / n
        })
        .collect();
    (loss / n, grads)
}

/// One (item, tag) score term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TagTerm {
    pub score: f64,
    pub observed: bool,
}

/// Negated weighted log likelihood averaged over all terms, and its
/// derivative with respect to every score.
///
/// The loss uses clamped probabilities; the derivative is that of the
/// unclamped expression, so saturated wrong predictions still get a signal.
pub fn tag_loss(terms: &[TagTerm], neg_weight: f64) -> (f64, Vec<f64>) {
    if terms.is_empty() {
        return (0.0, Vec::new());
    }
    let n = terms.len() as f64;
    let mut loss = 0.0;
    let grads = terms
        .iter()
        .map(|t| {
            let p = sigmoid(t.score);
            let pc = p.clamp(TAG_PROB_CLAMP, 1.0 - TAG_PROB_CLAMP);
            if t.observed {
                loss -= pc.ln();
                (p - 1.0) / n
            } else {
                loss -= neg_weight * (1.0 - pc).ln();
                neg_weight * p / n
            }
        })
        .collect();
    (loss / n, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_examples() {
        assert_eq!(predict_rating(&[0.0, 0.0], 0.0, 0.0, &[0.0, 0.0]), 0.0);
        assert_eq!(predict_rating(&[1.0, 0.0], 0.5, -0.5, &[2.0, 3.0]), 2.0);
        let base = predict_rating(&[0.3, -1.2], 0.1, 0.2, &[1.5, 0.5]) - 0.3;
        let scaled = predict_rating(&[0.3, -1.2], 0.1, 0.2, &[4.5, 1.5]) - 0.3;
        assert!((scaled - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_weight(37, 0.0, 1e-8), 1.0);
        assert_eq!(confidence_weight(0, 10.0, 1e-8), 1.0);
        // 1 + 10·ln(1 + 5e8), evaluated independently
        let w = confidence_weight(5, 10.0, 1e-8);
        assert!((w - 201.301187).abs() < 1e-6, "{w}");
    }

    #[test]
    fn rating_loss_examples() {
        let perfect = [
            RatingRow { predicted: 1.0, target: 1.0, weight: 3.0 },
            RatingRow { predicted: 0.0, target: 0.0, weight: 3.0 },
        ];
        let (l, g) = rating_loss(&perfect);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));

        let (l, g) = rating_loss(&[RatingRow { predicted: 0.5, target: 1.0, weight: 1.0 }]);
        assert_eq!(l, 0.25);
        assert_eq!(g, vec![-1.0]);

        let rows = [
            RatingRow { predicted: 0.2, target: 1.0, weight: 1.5 },
            RatingRow { predicted: 0.7, target: 0.0, weight: 2.5 },
        ];
        let doubled: Vec<RatingRow> = rows.iter().map(|r| RatingRow { weight: 2.0 * r.weight, ..*r }).collect();
        let (l1, g1) = rating_loss(&rows);
        let (l2, g2) = rating_loss(&doubled);
        assert_eq!(2.0 * l1, l2);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn tag_probability_examples() {
        assert_eq!(tag_probability(&[1.0, 0.0], &[0.0, 1.0]), 0.5);
        assert_eq!(tag_probability(&[1.0, 1.0], &[1.0, -1.0]), 0.5);
        assert!((tag_probability(&[1e3], &[1e3]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tag_loss_examples() {
        // saturated, all observed
        let sat = vec![TagTerm { score: 40.0, observed: true }; 3];
        assert!(tag_loss(&sat, 0.01).0 < 1e-6);
        // one unobserved tag at p = 0.5: −0.01·ln 0.5
        let (l, _) = tag_loss(&[TagTerm { score: 0.0, observed: false }], 0.01);
        assert!((l - 0.00693147).abs() < 1e-8);
        // zero weight annihilates unobserved tags
        let (l, g) = tag_loss(&[TagTerm { score: 1.3, observed: false }], 0.0);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_loss(1.0, 2.0, 4.0), 2.0);
        assert_eq!(combined_loss(0.0, 2.0, 4.0), 4.0);
        assert_eq!(combined_loss(0.5, 2.0, 4.0), 3.0);
        assert!(combined_loss(0.3, 2.5, 4.0) > combined_loss(0.3, 2.0, 4.0));
    }

    #[test]
    fn lambda_out_of_range_is_rejected() {
        let cfg = LossConfig { lambda: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }
}
