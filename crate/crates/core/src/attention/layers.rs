//! Single-pass cross-attention variants and the kernels the recurrent layer
//! shares with them.

use crate::em::{argmax_columns, one_hot, CenterSet};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, softmax_axis, softmax_in_place, Axis, FeatureMap, Matrix};

use super::AttentionParams;

/// Work done by one attention call.
///
/// `flop_count` counts scalar multiply-adds of the dense loops as written:
/// projections, score products, aggregation and head merging. Exponentials,
/// divisions and residual additions are not counted.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct AttentionStats {
    pub flop_count: u64,
    pub key_projections: usize,
    pub value_projections: usize,
    pub query_projections: usize,
}

/// A projected matrix together with its per-head column slices.
pub(crate) struct Heads {
    full: Matrix,
    parts: Vec<Matrix>,
}

impl Heads {
    pub(crate) fn new(full: Matrix, heads: usize) -> Self {
        let parts = if heads > 1 {
            let dh = full.cols() / heads;
            (0..heads).map(|h| full.column_block(h * dh, (h + 1) * dh)).collect()
        } else {
            Vec::new()
        };
        Self { full, parts }
    }

    pub(crate) fn get(&self, h: usize) -> &Matrix {
        if self.parts.is_empty() {
            &self.full
        } else {
            &self.parts[h]
        }
    }

    pub(crate) fn full(&self) -> &Matrix {
        &self.full
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ColumnRule {
    Softmax,
    Argmax,
}

pub(crate) fn check_inputs(c: &CenterSet, i: &FeatureMap, p: &AttentionParams, op: &'static str) -> Result<()> {
    if c.dim() != p.dim() || i.dim() != p.dim() {
        return Err(Error::Shape {
            op,
            left: c.matrix().shape(),
            right: i.as_matrix().shape(),
        });
    }
    if c.k() == 0 || i.is_empty() {
        return Err(Error::Contract(format!("{op} needs at least one query and one pixel")));
    }
    Ok(())
}

fn counted_matmul(a: &Matrix, b: &Matrix, stats: &mut AttentionStats) -> Result<Matrix> {
    stats.flop_count += (a.rows() * a.cols() * b.cols()) as u64;
    a.matmul(b)
}

pub(crate) fn project_keys_values(
    x: &Matrix,
    p: &AttentionParams,
    stats: &mut AttentionStats,
) -> Result<(Heads, Heads)> {
    let k = counted_matmul(x, p.w_k(), stats)?;
    stats.key_projections += 1;
    let v = counted_matmul(x, p.w_v(), stats)?;
    stats.value_projections += 1;
    Ok((Heads::new(k, p.heads()), Heads::new(v, p.heads())))
}

pub(crate) fn project_queries(c: &Matrix, w_q: &Matrix, heads: usize, stats: &mut AttentionStats) -> Result<Heads> {
    let q = counted_matmul(c, w_q, stats)?;
    stats.query_projections += 1;
    Ok(Heads::new(q, heads))
}

fn merge(concat: Matrix, p: &AttentionParams, stats: &mut AttentionStats) -> Result<Matrix> {
    if p.heads() == 1 {
        Ok(concat)
    } else {
        counted_matmul(&concat, p.head_merge(), stats)
    }
}

/// Assignment over queries followed by aggregation of values.
///
/// Returns the per-head `K × HW` assignments and the merged `K × D` update.
pub(crate) fn cluster_step(
    q: &Heads,
    keys: &Heads,
    values: &Heads,
    p: &AttentionParams,
    rule: ColumnRule,
    stats: &mut AttentionStats,
) -> Result<(Vec<Matrix>, Matrix)> {
    let heads = p.heads();
    let dh = p.head_dim();
    let kq = q.full().rows();
    let n = keys.full().rows();
    let mut assignments = Vec::with_capacity(heads);
    let mut concat = if heads > 1 { Matrix::zeros(kq, p.dim()) } else { Matrix::zeros(0, 0) };
    for h in 0..heads {
        let (qh, kh, vh) = (q.get(h), keys.get(h), values.get(h));
        stats.flop_count += (kq * n * dh) as u64;
        let logits = qh.matmul_transposed(kh)?;
        let (m, out) = match rule {
            ColumnRule::Softmax => {
                let m = softmax_axis(&logits, Axis::Cols);
                let out = counted_matmul(&m, vh, stats)?;
                (m, out)
            }
            ColumnRule::Argmax => {
                let labels = argmax_columns(&logits);
                let mut out = Matrix::zeros(kq, dh);
                for (px, &l) in labels.iter().enumerate() {
                    axpy(1.0, vh.row(px), out.row_mut(l));
                }
                stats.flop_count += (n * dh) as u64;
                (one_hot(&labels, kq), out)
            }
        };
        if heads == 1 {
            return Ok((vec![m], out));
        }
        concat.set_column_block(h * dh, &out);
        assignments.push(m);
    }
    Ok((assignments, merge(concat, p, stats)?))
}

/// Mean of per-head assignments; a single head is returned as is.
pub(crate) fn average_heads(mut per_head: Vec<Matrix>) -> Matrix {
    if per_head.len() == 1 {
        return per_head.pop().expect("one head");
    }
    let scale = 1.0 / per_head.len() as f64;
    let mut acc = Matrix::zeros(per_head[0].rows(), per_head[0].cols());
    for m in &per_head {
        axpy(scale, m.as_slice(), acc.as_mut_slice());
    }
    acc
}

fn residual(c: &CenterSet, update: &Matrix) -> Result<CenterSet> {
    CenterSet::new(c.matrix().add(update)?)
}

fn single_pass(
    c: &CenterSet,
    i: &FeatureMap,
    p: &AttentionParams,
    rule: ColumnRule,
    op: &'static str,
) -> Result<(CenterSet, AttentionStats)> {
    check_inputs(c, i, p, op)?;
    let mut stats = AttentionStats::default();
    let (keys, values) = project_keys_values(i.as_matrix(), p, &mut stats)?;
    let q = project_queries(c.matrix(), p.w_q(), p.heads(), &mut stats)?;
    let (_, update) = cluster_step(&q, &keys, &values, p, rule, &mut stats)?;
    Ok((residual(c, &update)?, stats))
}

/// `C + softmax_HW(Q·Kᵀ)·V`. Scores are computed one query row at a time, so
/// memory stays `O(HW)` even when the query set is the whole image.
pub fn vanilla_cross_attention(c: &CenterSet, i: &FeatureMap, p: &AttentionParams) -> Result<CenterSet> {
    vanilla_cross_attention_with_stats(c, i, p).map(|(c, _)| c)
}

pub fn vanilla_cross_attention_with_stats(
    c: &CenterSet,
    i: &FeatureMap,
    p: &AttentionParams,
) -> Result<(CenterSet, AttentionStats)> {
    check_inputs(c, i, p, "vanilla_cross_attention")?;
    let mut stats = AttentionStats::default();
    let (keys, values) = project_keys_values(i.as_matrix(), p, &mut stats)?;
    let q = project_queries(c.matrix(), p.w_q(), p.heads(), &mut stats)?;

    let (heads, dh, kq, n) = (p.heads(), p.head_dim(), c.k(), i.len());
    let mut concat = Matrix::zeros(kq, p.dim());
    let mut scores = vec![0.0; n];
    for h in 0..heads {
        let (qh, kh, vh) = (q.get(h), keys.get(h), values.get(h));
        for r in 0..kq {
            let qr = qh.row(r);
            for (s, px) in scores.iter_mut().zip(0..n) {
                *s = dot(qr, kh.row(px));
            }
            softmax_in_place(&mut scores);
            let out = &mut concat.row_mut(r)[h * dh..(h + 1) * dh];
            for (px, &s) in scores.iter().enumerate() {
                axpy(s, vh.row(px), out);
            }
        }
    }
    stats.flop_count += 2 * (kq * n * p.dim()) as u64;
    if !concat.is_finite() {
        return Err(Error::NonFinite { op: "vanilla_cross_attention" });
    }
    let update = merge(concat, p, &mut stats)?;
    Ok((residual(c, &update)?, stats))
}

/// `C + softmax_K(Q·Kᵀ)·V`.
pub fn cluster_softmax_attention(c: &CenterSet, i: &FeatureMap, p: &AttentionParams) -> Result<CenterSet> {
    cluster_softmax_attention_with_stats(c, i, p).map(|(c, _)| c)
}

pub fn cluster_softmax_attention_with_stats(
    c: &CenterSet,
    i: &FeatureMap,
    p: &AttentionParams,
) -> Result<(CenterSet, AttentionStats)> {
    single_pass(c, i, p, ColumnRule::Softmax, "cluster_softmax_attention")
}

/// `C + M·V` where `M` is the one-hot column argmax of `Q·Kᵀ`. Ties go to the
/// lowest query index. The aggregation is a scatter-add over pixels.
pub fn hard_assignment_attention(c: &CenterSet, i: &FeatureMap, p: &AttentionParams) -> Result<CenterSet> {
    hard_assignment_attention_with_stats(c, i, p).map(|(c, _)| c)
}

pub fn hard_assignment_attention_with_stats(
    c: &CenterSet,
    i: &FeatureMap,
    p: &AttentionParams,
) -> Result<(CenterSet, AttentionStats)> {
    single_pass(c, i, p, ColumnRule::Argmax, "hard_assignment_attention")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Clone, Copy)]
    enum Oracle {
        OverPixels,
        OverQueries,
        Argmax,
    }

    // Plain scalar loops over the definitions, single head.
    fn oracle(c: &[Vec<f64>], x: &[Vec<f64>], wq: &[Vec<f64>], wk: &[Vec<f64>], wv: &[Vec<f64>], mode: Oracle) -> Vec<Vec<f64>> {
        let proj = |rows: &[Vec<f64>], w: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| (0..w[0].len()).map(|j| (0..r.len()).map(|i| r[i] * w[i][j]).sum()).collect())
                .collect()
        };
        let (q, k, v) = (proj(c, wq), proj(x, wk), proj(x, wv));
        let (nk, n, d) = (c.len(), x.len(), c[0].len());
        let mut s = vec![vec![0.0; n]; nk];
        for a in 0..nk {
            for b in 0..n {
                s[a][b] = (0..d).map(|j| q[a][j] * k[b][j]).sum();
            }
        }
        let mut m = vec![vec![0.0; n]; nk];
        match mode {
            Oracle::OverPixels => {
                for a in 0..nk {
                    let mx = s[a].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = s[a].iter().map(|v| (v - mx).exp()).sum();
                    for b in 0..n {
                        m[a][b] = (s[a][b] - mx).exp() / z;
                    }
                }
            }
            Oracle::OverQueries => {
                for b in 0..n {
                    let mx = (0..nk).map(|a| s[a][b]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..nk).map(|a| (s[a][b] - mx).exp()).sum();
                    for a in 0..nk {
                        m[a][b] = (s[a][b] - mx).exp() / z;
                    }
                }
            }
            Oracle::Argmax => {
                for b in 0..n {
                    let mut best = 0;
                    for a in 1..nk {
                        if s[a][b] > s[best][b] {
                            best = a;
                        }
                    }
                    m[best][b] = 1.0;
                }
            }
        }
        (0..nk)
            .map(|a| (0..d).map(|j| c[a][j] + (0..n).map(|b| m[a][b] * v[b][j]).sum::<f64>()).collect())
            .collect()
    }

    fn rand_rows(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Vec<Vec<f64>> {
        (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
    }

    fn eye(d: usize) -> Vec<Vec<f64>> {
        (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    fn to_map(x: &[Vec<f64>], h: usize, w: usize) -> FeatureMap {
        FeatureMap::from_matrix(h, w, Matrix::from_rows(x).unwrap()).unwrap()
    }

    fn assert_close(got: &CenterSet, want: &[Vec<f64>], tol: f64) {
        let want = Matrix::from_rows(want).unwrap();
        let diff = got.matrix().max_abs_diff(&want);
        assert!(diff <= tol, "diff {diff:e}");
    }

    type Layer = fn(&CenterSet, &FeatureMap, &AttentionParams) -> Result<CenterSet>;

    fn check_against_oracle(layer: Layer, mode: Oracle, identity: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, x) = (rand_rows(&mut rng, 2, 2), rand_rows(&mut rng, 4, 2));
        let (wq, wk, wv) = if identity {
            (eye(2), eye(2), eye(2))
        } else {
            (rand_rows(&mut rng, 2, 2), rand_rows(&mut rng, 2, 2), rand_rows(&mut rng, 2, 2))
        };
        let m = |r: &Vec<Vec<f64>>| Matrix::from_rows(r).unwrap();
        let p = AttentionParams::single_head(m(&wq), m(&wk), m(&wv)).unwrap();
        let got = layer(&CenterSet::from_rows(&c).unwrap(), &to_map(&x, 2, 2), &p).unwrap();
        assert_close(&got, &oracle(&c, &x, &wq, &wk, &wv, mode), 1e-12);
    }

    #[test]
    fn scalar_oracles_agree() {
        for seed in 0..5 {
            for identity in [true, false] {
                check_against_oracle(vanilla_cross_attention, Oracle::OverPixels, identity, seed);
                check_against_oracle(cluster_softmax_attention, Oracle::OverQueries, identity, seed);
                check_against_oracle(hard_assignment_attention, Oracle::Argmax, identity, seed);
            }
        }
    }

    #[test]
    fn zero_values_keep_centers() {
        let fm = FeatureMap::from_fn(3, 3, 2, |y, x, c| (y * 3 + x + c) as f64 * 0.1);
        let c = CenterSet::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.0]]).unwrap();
        let p = AttentionParams::single_head(Matrix::identity(2), Matrix::identity(2), Matrix::zeros(2, 2)).unwrap();
        for layer in [vanilla_cross_attention as Layer, cluster_softmax_attention, hard_assignment_attention] {
            assert_eq!(layer(&c, &fm, &p).unwrap(), c);
        }
    }

    #[test]
    fn single_pixel_broadcasts_value() {
        let fm = FeatureMap::new(1, 1, 2, vec![3.0, -1.0]).unwrap();
        let c = CenterSet::from_rows(&[vec![0.0, 1.0], vec![5.0, 5.0]]).unwrap();
        let out = vanilla_cross_attention(&c, &fm, &AttentionParams::identity(2)).unwrap();
        assert_eq!(out.matrix().row(0), &[3.0, 0.0]);
        assert_eq!(out.matrix().row(1), &[8.0, 4.0]);
    }

    #[test]
    fn one_query_collects_every_value() {
        let fm = FeatureMap::from_fn(2, 3, 2, |y, x, c| (y * 3 + x) as f64 + c as f64 * 10.0);
        let c = CenterSet::from_rows(&[vec![0.25, 0.5]]).unwrap();
        let out = cluster_softmax_attention(&c, &fm, &AttentionParams::identity(2)).unwrap();
        let sums = fm.as_matrix().column_sums();
        assert!((out.matrix()[(0, 0)] - (0.25 + sums[0])).abs() < 1e-12);
        assert!((out.matrix()[(0, 1)] - (0.5 + sums[1])).abs() < 1e-12);
    }

    #[test]
    fn identical_queries_receive_identical_updates() {
        let fm = FeatureMap::from_fn(3, 2, 2, |y, x, c| ((y + 2 * x + c) as f64).sin());
        let c = CenterSet::from_rows(&[vec![0.3, 0.2], vec![0.3, 0.2]]).unwrap();
        let out = cluster_softmax_attention(&c, &fm, &AttentionParams::random(2, 1, 3).unwrap()).unwrap();
        assert_eq!(out.matrix().row(0), out.matrix().row(1));
    }

    #[test]
    fn hard_assignment_moves_only_the_winner() {
        let fm = FeatureMap::from_fn(2, 2, 2, |_, x, _| 1.0 + x as f64);
        let c = CenterSet::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let out = hard_assignment_attention(&c, &fm, &AttentionParams::identity(2)).unwrap();
        assert_eq!(out.matrix().row(0), &[7.0, 7.0]);
        assert_eq!(out.matrix().row(1), &[-1.0, -1.0]);
        // equal scores: query 0 wins
        let tie = CenterSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let out = hard_assignment_attention(&tie, &fm, &AttentionParams::identity(2)).unwrap();
        assert_eq!(out.matrix().row(1), &[0.0, 1.0]);
    }

    #[test]
    fn multi_head_equals_block_diagonal_split() {
        // Two heads over disjoint channel pairs with identity projections and
        // identity merge behave like two independent single-head layers.
        let fm = FeatureMap::from_fn(3, 3, 4, |y, x, c| ((y * 3 + x) as f64 * 0.37 + c as f64).cos());
        let c = CenterSet::from_rows(&[vec![0.1, 0.2, -0.3, 0.4], vec![-0.5, 0.6, 0.7, 0.0]]).unwrap();
        let i4 = Matrix::identity(4);
        let p = AttentionParams::new(i4.clone(), i4.clone(), i4.clone(), 2, i4.clone()).unwrap();
        let out = cluster_softmax_attention(&c, &fm, &p).unwrap();
        for h in 0..2 {
            let sub_fm = FeatureMap::from_matrix(3, 3, fm.as_matrix().column_block(2 * h, 2 * h + 2)).unwrap();
            let sub_c = CenterSet::new(c.matrix().column_block(2 * h, 2 * h + 2)).unwrap();
            let sub = cluster_softmax_attention(&sub_c, &sub_fm, &AttentionParams::identity(2)).unwrap();
            assert!(out.matrix().column_block(2 * h, 2 * h + 2).max_abs_diff(sub.matrix()) < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let fm = FeatureMap::zeros(2, 2, 3);
        let c = CenterSet::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            vanilla_cross_attention(&c, &fm, &AttentionParams::identity(2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn stats_count_the_dense_loops() {
        let (h, w, k, d) = (3usize, 4usize, 2usize, 4usize);
        let fm = FeatureMap::from_fn(h, w, d, |y, x, c| (y + x * c) as f64 * 0.01);
        let c = CenterSet::new(Matrix::from_fn(k, d, |r, col| (r + col) as f64 * 0.1)).unwrap();
        let p = AttentionParams::random(d, 1, 1).unwrap();
        let hw = (h * w) as u64;
        let (k, d) = (k as u64, d as u64);
        let (_, s) = cluster_softmax_attention_with_stats(&c, &fm, &p).unwrap();
        assert_eq!(s.flop_count, 2 * hw * d * d + k * d * d + 2 * k * hw * d);
        let (_, s) = vanilla_cross_attention_with_stats(&c, &fm, &p).unwrap();
        assert_eq!(s.flop_count, 2 * hw * d * d + k * d * d + 2 * k * hw * d);
        let (_, s) = hard_assignment_attention_with_stats(&c, &fm, &p).unwrap();
        assert_eq!(s.flop_count, 2 * hw * d * d + k * d * d + k * hw * d + hw * d);
        assert_eq!((s.key_projections, s.value_projections, s.query_projections), (1, 1, 1));
    }
}
