use rand::Rng;

use crate::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Arithmetic mean over time of equally sized state vectors.
pub fn mean_pool(states: &[Vec<f64>]) -> Vec<f64> {
    assert!(!states.is_empty(), "mean_pool over an empty sequence");
    let dim = states[0].len();
    let mut out = vec![0.0; dim];
    for s in states {
        assert_eq!(s.len(), dim, "mean_pool dimension mismatch");
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    let inv = 1.0 / states.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    out
}

/// Gradient of [`mean_pool`]: every position receives `grad / steps`.
pub fn mean_pool_backward(grad: &[f64], steps: usize) -> Vec<Vec<f64>> {
    assert!(steps > 0, "mean_pool_backward over an empty sequence");
    let share: Vec<f64> = grad.iter().map(|g| g / steps as f64).collect();
    vec![share; steps]
}

/// Inverted dropout mask: entries are `0` or `1 / (1 - rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn ones(len: usize) -> Self {
        DropoutMask(vec![1.0; len])
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (v, m) in x.iter_mut().zip(&self.0) {
            *v *= m;
        }
    }
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout. In training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
pub fn dropout(
    x: &[f64],
    rate: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<(Vec<f64>, DropoutMask)> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.to_vec(), DropoutMask::ones(x.len())));
    }
    let mask = sample_mask(x.len(), rate, rng);
    let mut out = x.to_vec();
    mask.apply(&mut out);
    Ok((out, mask))
}

pub(crate) fn sample_mask(len: usize, rate: f64, rng: &mut impl Rng) -> DropoutMask {
    let keep = 1.0 / (1.0 - rate);
    DropoutMask(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(1.0) + sigmoid(-1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_pool_examples() {
        let s = vec![1.5, -2.0];
        assert_eq!(mean_pool(&[s.clone(), s.clone(), s.clone()]), s);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_eq!(mean_pool(&[s, neg]), vec![0.0, 0.0]);
        let back = mean_pool_backward(&[4.0, -8.0], 4);
        assert_eq!(back.len(), 4);
        assert!(back.iter().all(|b| b == &vec![1.0, -2.0]));
    }

    #[test]
    #[should_panic]
    fn mean_pool_rejects_empty() {
        mean_pool(&[]);
    }

    #[test]
    fn dropout_eval_and_zero_rate_are_identity() {
        let mut rng = seeded_rng(1);
        let x = vec![0.3, -1.2, 4.0];
        let (y, _) = dropout(&x, 0.5, &mut rng, false).unwrap();
        assert_eq!(y, x);
        let (y, mask) = dropout(&x, 0.0, &mut rng, true).unwrap();
        assert_eq!(y, x);
        assert_eq!(mask, DropoutMask::ones(3));
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let mut rng = seeded_rng(1);
        assert!(dropout(&[1.0], 1.0, &mut rng, true).is_err());
        assert!(dropout(&[1.0], -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = seeded_rng(42);
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let n = 100_000;
        let mut sums = vec![0.0; x.len()];
        for _ in 0..n {
            let (y, _) = dropout(&x, 0.5, &mut rng, true).unwrap();
            for (s, v) in sums.iter_mut().zip(&y) {
                *s += v;
            }
        }
        for (s, v) in sums.iter().zip(&x) {
            let mean = s / n as f64;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "mean {mean} vs {v}");
        }
    }
}
