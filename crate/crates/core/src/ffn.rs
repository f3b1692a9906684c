//! Two-layer ReLU feed-forward block shared by the query initialisers and the
//! decoder layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `y = max(0, x·W₁ + b₁)·W₂ + b₂`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

/// Seeded Gaussian matrix with standard deviation `1/sqrt(rows)`.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let std = 1.0 / (rows.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

impl FeedForward {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        let hidden = w1.cols();
        if hidden == 0 {
            return Err(Error::Config("feed-forward hidden width must be at least 1".into()));
        }
        if b1.len() != hidden || w2.rows() != hidden || b2.len() != w2.cols() {
            return Err(Error::Shape {
                op: "FeedForward::new",
                left: w1.shape(),
                right: w2.shape(),
            });
        }
        if !(w1.is_finite() && w2.is_finite()) || b1.iter().chain(&b2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "FeedForward::new" });
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    /// Weights drawn from a seeded Gaussian (std `1/sqrt(fan_in)`), zero biases.
    pub fn random(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = gaussian_matrix(dim, hidden, &mut rng);
        let w2 = gaussian_matrix(hidden, dim, &mut rng);
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; dim],
        }
    }

    /// Random first layer, all-zero second layer: the block outputs zeros.
    pub fn zero_output(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut ffn = Self::random(dim, hidden, seed);
        ffn.w2 = Matrix::zeros(hidden, dim);
        ffn
    }

    /// Exact identity with hidden width `2·dim`: `max(0, x) - max(0, -x) = x`.
    pub fn identity(dim: usize) -> Self {
        let w1 = Matrix::from_fn(dim, 2 * dim, |r, c| {
            if c == r {
                1.0
            } else if c == r + dim {
                -1.0
            } else {
                0.0
            }
        });
        let w2 = Matrix::from_fn(2 * dim, dim, |r, c| {
            if r == c {
                1.0
            } else if r == c + dim {
                -1.0
            } else {
                0.0
            }
        });
        Self {
            w1,
            b1: vec![0.0; 2 * dim],
            w2,
            b2: vec![0.0; dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut hidden = x.matmul(&self.w1)?;
        for r in 0..hidden.rows() {
            for (h, b) in hidden.row_mut(r).iter_mut().zip(&self.b1) {
                *h = (*h + b).max(0.0);
            }
        }
        let mut out = hidden.matmul(&self.w2)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.b2) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Multiply-adds of one forward pass over `rows` inputs.
    pub fn flops(&self, rows: usize) -> u64 {
        let (d, h, o) = (self.input_dim() as u64, self.hidden_dim() as u64, self.output_dim() as u64);
        rows as u64 * (d * h + h * o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exact() {
        let x = Matrix::from_fn(7, 3, |r, c| (r as f64 - 3.0) * 1.37 + c as f64 * -0.5);
        let y = FeedForward::identity(3).forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_output_block() {
        let x = Matrix::from_fn(4, 5, |r, c| (r + c) as f64);
        let y = FeedForward::zero_output(5, 10, 1).forward(&x).unwrap();
        assert!(y.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_forward() {
        let w1 = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
        let ffn = FeedForward::new(w1, vec![0.5, 0.0], w2, vec![-1.0]).unwrap();
        let x = Matrix::from_rows(&[vec![2.0], vec![-2.0]]).unwrap();
        // row 0: hidden [2.5, 0] -> 5 - 1; row 1: hidden [0, 2] -> 6 - 1
        assert_eq!(ffn.forward(&x).unwrap().as_slice(), &[4.0, 5.0]);
    }

    #[test]
    fn seeded_weights_are_reproducible() {
        assert_eq!(FeedForward::random(4, 8, 9), FeedForward::random(4, 8, 9));
        assert_ne!(FeedForward::random(4, 8, 9), FeedForward::random(4, 8, 10));
    }

    #[test]
    fn bad_shapes_rejected() {
        let r = FeedForward::new(Matrix::zeros(2, 3), vec![0.0; 2], Matrix::zeros(3, 2), vec![0.0; 2]);
        assert!(matches!(r, Err(Error::Shape { .. })));
        let r = FeedForward::new(Matrix::zeros(2, 0), vec![], Matrix::zeros(0, 2), vec![0.0; 2]);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
