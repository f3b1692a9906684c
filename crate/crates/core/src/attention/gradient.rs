use crate::em::CenterSet;
use crate::error::{Error, Result};
use crate::linalg::{softmax_axis, Axis, FeatureMap, Matrix};

use super::layers::{check_inputs, Heads};
use super::AttentionParams;

/// Gradients of `L = Σ upstream ⊙ C_final` for one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RcaGradients {
    pub c0: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    /// Zero for a single head, where the merge is not applied.
    pub head_merge: Matrix,
    /// `H·W × D`, pixel-major like [`FeatureMap`].
    pub features: Matrix,
}

struct Round {
    centers: Matrix,
    queries: Heads,
    merged_input: Matrix,
    assignments: Vec<Matrix>,
}

/// Reverse-mode differentiation of `t` recurrent rounds.
///
/// The column-softmax backward is `dS = M ⊙ (dM - 1·(1ᵀ(M ⊙ dM)))`, applied
/// per pixel column.
pub fn rca_gradient(
    c0: &CenterSet,
    i: &FeatureMap,
    p: &AttentionParams,
    t: usize,
    upstream: &Matrix,
) -> Result<RcaGradients> {
    check_inputs(c0, i, p, "rca_gradient")?;
    if t == 0 {
        return Err(Error::Range {
            what: "t",
            value: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    if upstream.shape() != c0.matrix().shape() {
        return Err(Error::Shape {
            op: "rca_gradient",
            left: c0.matrix().shape(),
            right: upstream.shape(),
        });
    }
    let (heads, dh, d) = (p.heads(), p.head_dim(), p.dim());
    let x = i.as_matrix();
    let keys = Heads::new(x.matmul(p.w_k())?, heads);
    let values = Heads::new(x.matmul(p.w_v())?, heads);

    let mut rounds = Vec::with_capacity(t);
    let mut centers = c0.matrix().clone();
    for _ in 0..t {
        let queries = Heads::new(centers.matmul(p.w_q())?, heads);
        let mut merged_input = Matrix::zeros(centers.rows(), d);
        let mut assignments = Vec::with_capacity(heads);
        for h in 0..heads {
            let m = softmax_axis(&queries.get(h).matmul_transposed(keys.get(h))?, Axis::Cols);
            merged_input.set_column_block(h * dh, &m.matmul(values.get(h))?);
            assignments.push(m);
        }
        let next = if heads > 1 { merged_input.matmul(p.head_merge())? } else { merged_input.clone() };
        rounds.push(Round {
            centers,
            queries,
            merged_input,
            assignments,
        });
        centers = next;
    }

    let n = x.rows();
    let mut g = upstream.clone();
    let mut d_wq = Matrix::zeros(d, d);
    let mut d_merge = Matrix::zeros(d, d);
    let mut d_keys = Matrix::zeros(n, d);
    let mut d_values = Matrix::zeros(n, d);
    for round in rounds.iter().rev() {
        let d_out = if heads > 1 {
            d_merge.add_assign(&round.merged_input.transposed_matmul(&g)?)?;
            g.matmul_transposed(p.head_merge())?
        } else {
            g
        };
        let mut d_q = Matrix::zeros(d_out.rows(), d);
        for (h, m) in round.assignments.iter().enumerate() {
            let d_out_h = d_out.column_block(h * dh, (h + 1) * dh);
            let d_m = d_out_h.matmul_transposed(values.get(h))?;
            add_column_block(&mut d_values, h * dh, &m.transposed_matmul(&d_out_h)?);
            let d_s = column_softmax_backward(m, &d_m);
            d_q.set_column_block(h * dh, &d_s.matmul(keys.get(h))?);
            add_column_block(&mut d_keys, h * dh, &d_s.transposed_matmul(round.queries.get(h))?);
        }
        d_wq.add_assign(&round.centers.transposed_matmul(&d_q)?)?;
        g = d_q.matmul_transposed(p.w_q())?;
    }

    let mut d_features = d_keys.matmul_transposed(p.w_k())?;
    d_features.add_assign(&d_values.matmul_transposed(p.w_v())?)?;
    Ok(RcaGradients {
        c0: g,
        w_q: d_wq,
        w_k: x.transposed_matmul(&d_keys)?,
        w_v: x.transposed_matmul(&d_values)?,
        head_merge: d_merge,
        features: d_features,
    })
}

fn column_softmax_backward(m: &Matrix, d_m: &Matrix) -> Matrix {
    let (k, n) = m.shape();
    let mut inner = vec![0.0; n];
    for r in 0..k {
        for ((acc, &s), &g) in inner.iter_mut().zip(m.row(r)).zip(d_m.row(r)) {
            *acc += s * g;
        }
    }
    Matrix::from_fn(k, n, |r, c| m[(r, c)] * (d_m[(r, c)] - inner[c]))
}

fn add_column_block(target: &mut Matrix, start: usize, block: &Matrix) {
    for r in 0..block.rows() {
        for (t, b) in target.row_mut(r)[start..start + block.cols()].iter_mut().zip(block.row(r)) {
            *t += b;
        }
    }
}
