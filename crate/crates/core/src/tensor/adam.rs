use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub first: Tensor,
    pub second: Tensor,
}

/// Bias-corrected Adam over named parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        AdamState {
            config,
            step: 0,
            moments: shapes
                .iter()
                .map(|s| Moments {
                    first: Tensor::zeros(s),
                    second: Tensor::zeros(s),
                })
                .collect(),
        }
    }

    /// One update of every group. Gradients are checked for finiteness
    /// before any parameter is touched.
    pub fn step(
        &mut self,
        names: &[String],
        params: &mut [&mut Tensor],
        grads: &[&Tensor],
    ) -> Result<()> {
        assert_eq!(params.len(), self.moments.len(), "Adam group count mismatch");
        assert_eq!(grads.len(), self.moments.len(), "Adam group count mismatch");
        for (name, g) in names.iter().zip(grads) {
            if !g.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient in parameter group `{name}`"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            assert_eq!(p.shape(), g.shape(), "Adam parameter/gradient shape mismatch");
            update_group(p.data_mut(), g.data(), m, c, bc1, bc2);
        }
        Ok(())
    }
}

fn update_group(p: &mut [f64], g: &[f64], m: &mut Moments, c: AdamConfig, bc1: f64, bc2: f64) {
    let first = m.first.data_mut();
    let second = m.second.data_mut();
    for i in 0..p.len() {
        first[i] = c.beta1 * first[i] + (1.0 - c.beta1) * g[i];
        second[i] = c.beta2 * second[i] + (1.0 - c.beta2) * g[i] * g[i];
        let m_hat = first[i] / bc1;
        let v_hat = second[i] / bc2;
        p[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::vector(vec![0.5, -1.0]);
        let g = Tensor::zeros(&[2]);
        let mut s = AdamState::new(AdamConfig::default(), &[&[2]]);
        s.step(&names(1), &mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[0.5, -1.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², step = lr·g/(|g| + eps) ≈ lr
        let mut p = Tensor::vector(vec![1.0]);
        let g = Tensor::vector(vec![1.0]);
        let mut s = AdamState::new(AdamConfig::default(), &[&[1]]);
        s.step(&names(1), &mut [&mut p], &[&g]).unwrap();
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn groups_update_independently_of_order() {
        let ga = Tensor::vector(vec![0.3, -0.2]);
        let gb = Tensor::vector(vec![1.5]);
        let mut a1 = Tensor::vector(vec![1.0, 2.0]);
        let mut b1 = Tensor::vector(vec![-3.0]);
        let mut s1 = AdamState::new(AdamConfig::default(), &[&[2], &[1]]);
        let mut a2 = a1.clone();
        let mut b2 = b1.clone();
        let mut s2 = AdamState::new(AdamConfig::default(), &[&[1], &[2]]);
        for _ in 0..3 {
            s1.step(&names(2), &mut [&mut a1, &mut b1], &[&ga, &gb]).unwrap();
            s2.step(&names(2), &mut [&mut b2, &mut a2], &[&gb, &ga]).unwrap();
        }
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn non_finite_gradient_names_group() {
        let mut p = Tensor::vector(vec![0.0]);
        let g = Tensor::vector(vec![f64::NAN]);
        let mut s = AdamState::new(AdamConfig::default(), &[&[1]]);
        let err = s
            .step(&["user_factors".to_string()], &mut [&mut p], &[&g])
            .unwrap_err();
        assert!(err.to_string().contains("user_factors"));
        assert_eq!(s.step, 0);
    }
}
