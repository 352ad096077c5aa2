//! Gated recurrent unit with hand-derived backpropagation through time.
//!
//! Gate layout: the stacked gate matrix maps `[e; h_prev]` to `[f; o]`,
//! forget (reset) gate rows first, output (update) gate rows second.
//! Checkpoints depend on this order.
//!
//! ```text
//! [f; o] = sigmoid(gates · [e; h_prev] + gate_bias)
//! c      = tanh(cand_w · e + f ⊙ (cand_h · h_prev) + cand_bias)
//! h      = (1 - o) ⊙ h_prev + o ⊙ c
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::sigmoid;
use super::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    /// `[2·hidden × (input + hidden)]`
    pub gates: Tensor,
    /// `[hidden × input]`
    pub cand_w: Tensor,
    /// `[hidden × hidden]`
    pub cand_h: Tensor,
    /// `[2·hidden]`
    pub gate_bias: Tensor,
    /// `[hidden]`
    pub cand_bias: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            gates: Tensor::zeros(&[2 * hidden, input + hidden]),
            cand_w: Tensor::zeros(&[hidden, input]),
            cand_h: Tensor::zeros(&[hidden, hidden]),
            gate_bias: Tensor::zeros(&[2 * hidden]),
            cand_bias: Tensor::zeros(&[hidden]),
        }
    }

    /// Scaled-uniform matrices with bound `sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        GruParams {
            gates: Tensor::uniform(
                &[2 * hidden, input + hidden],
                glorot(input + hidden, 2 * hidden),
                rng,
            ),
            cand_w: Tensor::uniform(&[hidden, input], glorot(input, hidden), rng),
            cand_h: Tensor::uniform(&[hidden, hidden], glorot(hidden, hidden), rng),
            gate_bias: Tensor::zeros(&[2 * hidden]),
            cand_bias: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GruParams::zeros(self.input_dim(), self.hidden_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.cand_w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.cand_w.rows()
    }

    pub const GROUP_NAMES: [&'static str; 5] =
        ["gates", "cand_w", "cand_h", "gate_bias", "cand_bias"];

    pub fn tensors(&self) -> [&Tensor; 5] {
        [
            &self.gates,
            &self.cand_w,
            &self.cand_h,
            &self.gate_bias,
            &self.cand_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 5] {
        [
            &mut self.gates,
            &mut self.cand_w,
            &mut self.cand_h,
            &mut self.gate_bias,
            &mut self.cand_bias,
        ]
    }

    fn check_shapes(&self) {
        let (i, h) = (self.input_dim(), self.hidden_dim());
        assert_eq!(self.gates.shape(), &[2 * h, i + h], "gate matrix shape");
        assert_eq!(self.cand_h.shape(), &[h, h], "recurrent candidate shape");
        assert_eq!(self.gate_bias.shape(), &[2 * h], "gate bias shape");
        assert_eq!(self.cand_bias.shape(), &[h], "candidate bias shape");
    }
}

/// Intermediate values of one cell step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GruStepCache {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub cand: Vec<f64>,
    pub h: Vec<f64>,
    /// `cand_h · h_prev`, before gating.
    pub recur: Vec<f64>,
}

pub fn cell_forward(input: &[f64], h_prev: &[f64], params: &GruParams) -> (Vec<f64>, GruStepCache) {
    params.check_shapes();
    let (in_dim, hid) = (params.input_dim(), params.hidden_dim());
    assert_eq!(input.len(), in_dim, "GRU input dimension mismatch");
    assert_eq!(h_prev.len(), hid, "GRU hidden dimension mismatch");

    let mut x = Vec::with_capacity(in_dim + hid);
    x.extend_from_slice(input);
    x.extend_from_slice(h_prev);
    let mut pre = vec![0.0; 2 * hid];
    params.gates.matvec(&x, &mut pre);
    let bias = params.gate_bias.data();
    let forget: Vec<f64> = (0..hid).map(|k| sigmoid(pre[k] + bias[k])).collect();
    let output: Vec<f64> = (0..hid)
        .map(|k| sigmoid(pre[hid + k] + bias[hid + k]))
        .collect();

    let mut recur = vec![0.0; hid];
    params.cand_h.matvec(h_prev, &mut recur);
    let mut cand = vec![0.0; hid];
    params.cand_w.matvec(input, &mut cand);
    let cb = params.cand_bias.data();
    for k in 0..hid {
        cand[k] = (cand[k] + forget[k] * recur[k] + cb[k]).tanh();
    }
    let h: Vec<f64> = (0..hid)
        .map(|k| (1.0 - output[k]) * h_prev[k] + output[k] * cand[k])
        .collect();

    let cache = GruStepCache {
        input: input.to_vec(),
        h_prev: h_prev.to_vec(),
        forget,
        output,
        cand,
        h: h.clone(),
        recur,
    };
    (h, cache)
}

/// Backward through one step. Parameter gradients are accumulated into
/// `grads`; returns `(d_input, d_h_prev)`.
pub fn cell_backward(
    d_h: &[f64],
    cache: &GruStepCache,
    params: &GruParams,
    grads: &mut GruParams,
) -> (Vec<f64>, Vec<f64>) {
    let (in_dim, hid) = (params.input_dim(), params.hidden_dim());
    assert_eq!(d_h.len(), hid, "GRU gradient dimension mismatch");
    assert_eq!(cache.input.len(), in_dim, "GRU cache does not match params");
    assert_eq!(cache.h_prev.len(), hid, "GRU cache does not match params");
    assert_eq!(grads.gates.shape(), params.gates.shape(), "GRU grad shape");

    let mut d_h_prev = vec![0.0; hid];
    let mut d_pre_gates = vec![0.0; 2 * hid];
    let mut d_cand_pre = vec![0.0; hid];
    let mut d_recur = vec![0.0; hid];
    for k in 0..hid {
        let (f, o, c) = (cache.forget[k], cache.output[k], cache.cand[k]);
        let d_o = d_h[k] * (c - cache.h_prev[k]);
        let d_c = d_h[k] * o;
        d_h_prev[k] = d_h[k] * (1.0 - o);
        let dq = d_c * (1.0 - c * c);
        d_cand_pre[k] = dq;
        let d_f = dq * cache.recur[k];
        d_recur[k] = dq * f;
        d_pre_gates[k] = d_f * f * (1.0 - f);
        d_pre_gates[hid + k] = d_o * o * (1.0 - o);
    }

    axpy_into(grads.cand_bias.data_mut(), &d_cand_pre);
    grads.cand_w.outer_acc(&d_cand_pre, &cache.input);
    grads.cand_h.outer_acc(&d_recur, &cache.h_prev);
    axpy_into(grads.gate_bias.data_mut(), &d_pre_gates);
    let mut x = Vec::with_capacity(in_dim + hid);
    x.extend_from_slice(&cache.input);
    x.extend_from_slice(&cache.h_prev);
    grads.gates.outer_acc(&d_pre_gates, &x);

    let mut d_input = vec![0.0; in_dim];
    params.cand_w.matvec_t_acc(&d_cand_pre, &mut d_input);
    params.cand_h.matvec_t_acc(&d_recur, &mut d_h_prev);
    let mut d_x = vec![0.0; in_dim + hid];
    params.gates.matvec_t_acc(&d_pre_gates, &mut d_x);
    for (d, v) in d_input.iter_mut().zip(&d_x[..in_dim]) {
        *d += v;
    }
    for (d, v) in d_h_prev.iter_mut().zip(&d_x[in_dim..]) {
        *d += v;
    }
    (d_input, d_h_prev)
}

fn axpy_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// States and caches of one directional pass. `states[t]` and
/// `caches[t]` always refer to input position `t`, whatever the direction.
#[derive(Clone, Debug)]
pub struct SequenceRun {
    pub direction: Direction,
    pub states: Vec<Vec<f64>>,
    pub caches: Vec<GruStepCache>,
}

fn order(len: usize, direction: Direction) -> Box<dyn Iterator<Item = usize>> {
    match direction {
        Direction::Forward => Box::new(0..len),
        Direction::Backward => Box::new((0..len).rev()),
    }
}

pub fn sequence_forward(
    inputs: &[Vec<f64>],
    params: &GruParams,
    direction: Direction,
    h0: &[f64],
) -> SequenceRun {
    assert!(!inputs.is_empty(), "GRU sequence must be non-empty");
    let n = inputs.len();
    let mut states = vec![Vec::new(); n];
    let mut caches: Vec<Option<GruStepCache>> = vec![None; n];
    let mut h = h0.to_vec();
    for t in order(n, direction) {
        let (next, cache) = cell_forward(&inputs[t], &h, params);
        states[t] = next.clone();
        caches[t] = Some(cache);
        h = next;
    }
    SequenceRun {
        direction,
        states,
        caches: caches.into_iter().map(|c| c.expect("every step visited")).collect(),
    }
}

/// Backpropagation through time. `d_states[t]` is the external gradient on
/// the state at position `t`; returns the gradient on each input.
pub fn sequence_backward(
    d_states: &[Vec<f64>],
    run: &SequenceRun,
    params: &GruParams,
    grads: &mut GruParams,
) -> Vec<Vec<f64>> {
    let n = run.caches.len();
    assert_eq!(d_states.len(), n, "gradient length must match sequence");
    let mut d_inputs = vec![Vec::new(); n];
    let mut carry = vec![0.0; params.hidden_dim()];
    let visit: Vec<usize> = order(n, run.direction).collect();
    for &t in visit.iter().rev() {
        let d_h: Vec<f64> = d_states[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let (d_in, d_prev) = cell_backward(&d_h, &run.caches[t], params, grads);
        d_inputs[t] = d_in;
        carry = d_prev;
    }
    d_inputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn scalar_params() -> GruParams {
        GruParams {
            gates: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]),
            cand_w: Tensor::matrix(1, 1, vec![1.0]),
            cand_h: Tensor::matrix(1, 1, vec![1.0]),
            gate_bias: Tensor::vector(vec![0.0, 0.0]),
            cand_bias: Tensor::vector(vec![0.0]),
        }
    }

    #[test]
    fn zero_params_give_half_gates_and_zero_state() {
        let p = GruParams::zeros(3, 2);
        let (h, cache) = cell_forward(&[0.4, -1.0, 2.0], &[0.0, 0.0], &p);
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(cache.forget, vec![0.5, 0.5]);
        assert_eq!(cache.output, vec![0.5, 0.5]);
        assert_eq!(cache.cand, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        // f = σ(1), o = σ(0), c = tanh(1 + f·0.5), h = 0.5·0.5 + 0.5·c
        let f = 1.0 / (1.0 + (-1.0f64).exp());
        let c = (1.0 + f * 0.5).tanh();
        let expected = 0.5 * 0.5 + 0.5 * c;
        let (h, cache) = cell_forward(&[1.0], &[0.5], &scalar_params());
        assert!((cache.forget[0] - 0.731059).abs() < 1e-6);
        assert!((cache.cand[0] - 0.877669).abs() < 1e-6);
        assert!((h[0] - 0.688835).abs() < 1e-6);
        assert!((h[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn closed_update_gate_keeps_previous_state() {
        let mut rng = seeded_rng(3);
        let mut p = GruParams::init(2, 3, &mut rng);
        for k in 3..6 {
            p.gate_bias.data_mut()[k] = -60.0;
        }
        let h_prev = vec![0.3, -0.7, 0.1];
        let (h, _) = cell_forward(&[1.0, -2.0], &h_prev, &p);
        for (a, b) in h.iter().zip(&h_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_everything() {
        let mut rng = seeded_rng(5);
        let p = GruParams::init(2, 2, &mut rng);
        let (_, cache) = cell_forward(&[0.2, 0.1], &[0.3, -0.2], &p);
        let mut g = p.zeros_like();
        let (d_in, d_prev) = cell_backward(&[0.0, 0.0], &cache, &p, &mut g);
        assert!(d_in.iter().chain(&d_prev).all(|v| *v == 0.0));
        assert!(g.tensors().iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut rng = seeded_rng(9);
        let p = GruParams::init(3, 2, &mut rng);
        let (_, cache) = cell_forward(&[0.2, 0.1, -0.4], &[0.3, -0.2], &p);
        let mut once = p.zeros_like();
        cell_backward(&[1.0, -0.5], &cache, &p, &mut once);
        let mut twice = p.zeros_like();
        cell_backward(&[1.0, -0.5], &cache, &p, &mut twice);
        cell_backward(&[1.0, -0.5], &cache, &p, &mut twice);
        for (a, b) in once.tensors().iter().zip(twice.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn length_one_sequence_is_one_cell() {
        let mut rng = seeded_rng(11);
        let p = GruParams::init(2, 3, &mut rng);
        let x = vec![vec![0.5, -0.25]];
        let h0 = vec![0.0; 3];
        let (h, _) = cell_forward(&x[0], &h0, &p);
        for dir in [Direction::Forward, Direction::Backward] {
            assert_eq!(sequence_forward(&x, &p, dir, &h0).states[0], h);
        }
    }

    #[test]
    fn palindrome_directions_mirror_each_other() {
        let mut rng = seeded_rng(12);
        let p = GruParams::init(2, 3, &mut rng);
        let a = vec![0.1, 0.9];
        let b = vec![-0.3, 0.4];
        let c = vec![0.7, -0.2];
        let seq = vec![a.clone(), b.clone(), c, b, a];
        let h0 = vec![0.0; 3];
        let fwd = sequence_forward(&seq, &p, Direction::Forward, &h0);
        let bwd = sequence_forward(&seq, &p, Direction::Backward, &h0);
        let n = seq.len();
        for t in 0..n {
            assert_eq!(fwd.states[t], bwd.states[n - 1 - t]);
        }
    }

    #[test]
    fn zero_params_sequence_stays_zero() {
        let p = GruParams::zeros(2, 2);
        let seq = vec![vec![1.0, 2.0]; 4];
        let run = sequence_forward(&seq, &p, Direction::Forward, &[0.0, 0.0]);
        assert!(run.states.iter().all(|h| h == &vec![0.0, 0.0]));
    }
}
