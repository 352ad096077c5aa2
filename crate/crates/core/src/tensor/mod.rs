//! Dense row-major arrays and the hand-differentiated primitives built on them.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod ops;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major `f64` array.
///
/// Vectors have a one-element shape, matrices a two-element shape
/// `[rows, cols]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Internal(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length mismatch");
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    /// Matrix with entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl rand::Rng) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| {
                if bound == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-bound..=bound)
                }
            })
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `out = self · x` for a matrix `self`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let (rows, cols) = (self.rows(), self.cols());
        assert_eq!(x.len(), cols, "matvec input length mismatch");
        assert_eq!(out.len(), rows, "matvec output length mismatch");
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[r * cols..(r + 1) * cols], x);
        }
    }

    /// `out += selfᵀ · y` for a matrix `self`.
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        let (rows, cols) = (self.rows(), self.cols());
        assert_eq!(y.len(), rows, "matvec_t input length mismatch");
        assert_eq!(out.len(), cols, "matvec_t output length mismatch");
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            axpy(yr, &self.data[r * cols..(r + 1) * cols], out);
        }
    }

    /// `self += y · xᵀ` for a matrix `self`.
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        let (rows, cols) = (self.rows(), self.cols());
        assert_eq!(y.len(), rows, "outer_acc row length mismatch");
        assert_eq!(x.len(), cols, "outer_acc col length mismatch");
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            axpy(yr, x, &mut self.data[r * cols..(r + 1) * cols]);
        }
    }
}

/// A fixed, ordered collection of named parameter tensors.
///
/// Gradients of a parameter set use the same type, so that optimizers,
/// checkpoints and gradient checks can walk both in lockstep.
pub trait ParamGroups {
    fn group_names(&self) -> Vec<String>;
    fn group_tensors(&self) -> Vec<&Tensor>;
    fn group_tensors_mut(&mut self) -> Vec<&mut Tensor>;
}

impl ParamGroups for gru::GruParams {
    fn group_names(&self) -> Vec<String> {
        Self::GROUP_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn group_tensors(&self) -> Vec<&Tensor> {
        self.tensors().to_vec()
    }

    fn group_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors_mut().into_iter().collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
