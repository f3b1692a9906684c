use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ffn::gaussian_matrix;
use crate::linalg::Matrix;

/// Query/key/value projections of one attention layer, plus the matrix that
/// merges concatenated head outputs.
///
/// Projections act on row vectors: `Q = C·W_q`, `K = X·W_k`, `V = X·W_v`.
/// With `heads > 1` every head attends over its own `D/heads` column slice
/// and the concatenated result is multiplied by `head_merge`. With one head
/// the merge matrix must be the identity and is never applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    w_q: Matrix,
    w_k: Matrix,
    w_v: Matrix,
    heads: usize,
    head_merge: Matrix,
}

impl AttentionParams {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix, heads: usize, head_merge: Matrix) -> Result<Self> {
        let d = w_q.rows();
        for (name, m) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v), ("head_merge", &head_merge)] {
            if m.shape() != (d, d) {
                return Err(Error::Shape {
                    op: "AttentionParams::new",
                    left: (d, d),
                    right: m.shape(),
                });
            }
            if !m.is_finite() {
                return Err(Error::Config(format!("{name} contains a non-finite entry")));
            }
        }
        if d == 0 {
            return Err(Error::Config("attention width must be at least 1".into()));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("{d} channels cannot be split into {heads} heads")));
        }
        if heads == 1 && head_merge != Matrix::identity(d) {
            return Err(Error::Config("head_merge must be the identity for a single head".into()));
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            heads,
            head_merge,
        })
    }

    pub fn single_head(w_q: Matrix, w_k: Matrix, w_v: Matrix) -> Result<Self> {
        let d = w_q.rows();
        Self::new(w_q, w_k, w_v, 1, Matrix::identity(d))
    }

    pub fn identity(d: usize) -> Self {
        Self::single_head(Matrix::identity(d), Matrix::identity(d), Matrix::identity(d))
            .expect("identity projections are valid")
    }

    pub fn zeros(d: usize) -> Self {
        Self::single_head(Matrix::zeros(d, d), Matrix::zeros(d, d), Matrix::zeros(d, d))
            .expect("zero projections are valid")
    }

    /// Seeded Gaussian projections with standard deviation `1/sqrt(d)`.
    pub fn random(d: usize, heads: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_q = gaussian_matrix(d, d, &mut rng);
        let w_k = gaussian_matrix(d, d, &mut rng);
        let w_v = gaussian_matrix(d, d, &mut rng);
        let merge = if heads == 1 {
            Matrix::identity(d)
        } else {
            gaussian_matrix(d, d, &mut rng)
        };
        Self::new(w_q, w_k, w_v, heads, merge)
    }

    pub fn dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn w_q(&self) -> &Matrix {
        &self.w_q
    }

    pub fn w_k(&self) -> &Matrix {
        &self.w_k
    }

    pub fn w_v(&self) -> &Matrix {
        &self.w_v
    }

    pub fn head_merge(&self) -> &Matrix {
        &self.head_merge
    }

    /// Same keys, values and merge with a different query projection.
    pub fn with_query(&self, w_q: Matrix) -> Result<Self> {
        Self::new(
            w_q,
            self.w_k.clone(),
            self.w_v.clone(),
            self.heads,
            self.head_merge.clone(),
        )
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let d = self.dim();
        let merge = if self.heads > 1 { d * d } else { 0 };
        3 * d * d + merge
    }
}
