use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::em::{augment_centers, augment_points, CenterSet, CenterUpdate};
use crate::error::{Error, Result};
use crate::ffn::gaussian_matrix;
use crate::linalg::{softmax_axis, Axis, FeatureMap, Matrix};

use super::layers::{
    average_heads, check_inputs, cluster_step, project_keys_values, project_queries, AttentionStats, ColumnRule,
};
use super::AttentionParams;

/// Output of one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `M̂` of every iteration, `K × HW`, averaged over heads.
    pub assignments: Vec<Matrix>,
    pub centers: CenterSet,
    pub flop_count: u64,
    pub key_projections: usize,
    pub value_projections: usize,
    pub query_projections: usize,
}

impl LayerTrace {
    fn from_parts(assignments: Vec<Matrix>, centers: CenterSet, stats: AttentionStats) -> Self {
        Self {
            assignments,
            centers,
            flop_count: stats.flop_count,
            key_projections: stats.key_projections,
            value_projections: stats.value_projections,
            query_projections: stats.query_projections,
        }
    }

    pub fn iterations(&self) -> usize {
        self.assignments.len()
    }
}

fn require_iterations(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::Range {
            what: "t",
            value: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    Ok(())
}

/// `t` rounds of `M̂ = softmax_K(C·W_q·Kᵀ)`, `C ← M̂·V`.
///
/// Keys and values are projected once; only the queries are re-projected per
/// round. There is no residual inside the loop.
pub fn recurrent_cross_attention(c0: &CenterSet, i: &FeatureMap, p: &AttentionParams, t: usize) -> Result<LayerTrace> {
    require_iterations(t)?;
    run(c0, i, p, t, |_| p.w_q(), "recurrent_cross_attention")
}

/// Like [`recurrent_cross_attention`] but round `s ≥ 1` uses its own query
/// projection `extra_w_q[s - 1]`, so `t = 1 + extra_w_q.len()`. Keys and
/// values stay shared.
pub fn stacked_unshared_attention(
    c0: &CenterSet,
    i: &FeatureMap,
    p: &AttentionParams,
    extra_w_q: &[Matrix],
) -> Result<LayerTrace> {
    for w in extra_w_q {
        if w.shape() != (p.dim(), p.dim()) {
            return Err(Error::Shape {
                op: "stacked_unshared_attention",
                left: (p.dim(), p.dim()),
                right: w.shape(),
            });
        }
    }
    run(
        c0,
        i,
        p,
        1 + extra_w_q.len(),
        |s| if s == 0 { p.w_q() } else { &extra_w_q[s - 1] },
        "stacked_unshared_attention",
    )
}

/// Seeded extra query projections for [`stacked_unshared_attention`].
pub fn stacked_unshared_queries(d: usize, t: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..t.max(1)).map(|_| gaussian_matrix(d, d, &mut rng)).collect()
}

fn run<'a>(
    c0: &CenterSet,
    i: &FeatureMap,
    p: &'a AttentionParams,
    t: usize,
    w_q: impl Fn(usize) -> &'a Matrix,
    op: &'static str,
) -> Result<LayerTrace> {
    check_inputs(c0, i, p, op)?;
    let mut stats = AttentionStats::default();
    let (keys, values) = project_keys_values(i.as_matrix(), p, &mut stats)?;
    let mut centers = c0.matrix().clone();
    let mut assignments = Vec::with_capacity(t);
    for s in 0..t {
        let q = project_queries(&centers, w_q(s), p.heads(), &mut stats)?;
        let (m, next) = cluster_step(&q, &keys, &values, p, ColumnRule::Softmax, &mut stats)?;
        assignments.push(average_heads(m));
        centers = next;
    }
    Ok(LayerTrace::from_parts(assignments, CenterSet::new(centers)?, stats))
}

/// Similarity used by [`recurrent_clustering`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    /// `c·x`.
    DotProduct,
    /// `-½‖x - c‖²` up to a per-pixel constant, via `[c, -½‖c‖²]·[x, 1]`.
    NegSquaredDistance,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Self::DotProduct),
            "neg_sq_dist" => Ok(Self::NegSquaredDistance),
            other => Err(Error::Config(format!("unknown similarity {other:?}"))),
        }
    }
}

/// Parameter-free recurrence over raw points `x` (`N × D`).
///
/// Each round computes `M̂ = softmax_K(sim(C, X))` and then `C ← M̂·X`
/// (`PaperSum`) or its mass-normalised form (`WeightedMean`). Under
/// `WeightedMean` a cluster whose mass underflows to zero keeps its previous
/// center. With `DotProduct` and `PaperSum` this is the recurrent layer with
/// identity projections, minus the projection work.
///
/// Flops per round: `K·N·D'` for scores (`D' = D` or `D + 1`), `K·N·D` for
/// aggregation, plus `K·D` for the center norms under `NegSquaredDistance`.
pub fn recurrent_clustering(
    c0: &CenterSet,
    x: &Matrix,
    t: usize,
    similarity: Similarity,
    update: CenterUpdate,
) -> Result<LayerTrace> {
    require_iterations(t)?;
    if c0.dim() != x.cols() {
        return Err(Error::Shape {
            op: "recurrent_clustering",
            left: c0.matrix().shape(),
            right: x.shape(),
        });
    }
    if c0.k() == 0 || x.rows() == 0 {
        return Err(Error::Contract("recurrent_clustering needs at least one center and one point".into()));
    }
    let (k, n, d) = (c0.k() as u64, x.rows() as u64, x.cols() as u64);
    let keys = match similarity {
        Similarity::DotProduct => None,
        Similarity::NegSquaredDistance => Some(augment_points(x)),
    };
    let mut stats = AttentionStats {
        key_projections: 1,
        value_projections: 1,
        ..AttentionStats::default()
    };
    let mut centers = c0.matrix().clone();
    let mut assignments = Vec::with_capacity(t);
    for _ in 0..t {
        let m = clustering_assign(&centers, x, keys.as_ref(), &mut stats)?;
        let mut next = m.matmul(x)?;
        stats.flop_count += k * n * d;
        if update == CenterUpdate::WeightedMean {
            for r in 0..next.rows() {
                let mass: f64 = m.row(r).iter().sum();
                if mass > f64::MIN_POSITIVE {
                    next.row_mut(r).iter_mut().for_each(|v| *v /= mass);
                } else {
                    next.row_mut(r).copy_from_slice(centers.row(r));
                }
            }
        }
        assignments.push(m);
        centers = next;
    }
    Ok(LayerTrace::from_parts(assignments, CenterSet::new(centers)?, stats))
}

/// One assignment of `x` to `centers` with the given augmented keys, as used
/// inside [`recurrent_clustering`].
pub fn clustering_assignment(centers: &CenterSet, x: &Matrix, similarity: Similarity) -> Result<Matrix> {
    let keys = match similarity {
        Similarity::DotProduct => None,
        Similarity::NegSquaredDistance => Some(augment_points(x)),
    };
    clustering_assign(centers.matrix(), x, keys.as_ref(), &mut AttentionStats::default())
}

fn clustering_assign(centers: &Matrix, x: &Matrix, aug_keys: Option<&Matrix>, stats: &mut AttentionStats) -> Result<Matrix> {
    stats.query_projections += 1;
    let (k, n, d) = (centers.rows() as u64, x.rows() as u64, x.cols() as u64);
    let logits = match aug_keys {
        None => {
            stats.flop_count += k * n * d;
            centers.matmul_transposed(x)?
        }
        Some(keys) => {
            stats.flop_count += k * d + k * n * (d + 1);
            augment_centers(centers).matmul_transposed(keys)?
        }
    };
    Ok(softmax_axis(&logits, Axis::Cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{e_step, em_cluster, m_step, EStepKind, EmConfig};
    use crate::linalg::SOFTMAX_SUM_TOL;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_instance(seed: u64, n: usize, k: usize, d: usize) -> (CenterSet, FeatureMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fm = FeatureMap::from_fn(1, n, d, |_, _, _| rng.random_range(-1.0..1.0));
        let c = CenterSet::new(Matrix::from_fn(k, d, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        (c, fm)
    }

    #[test]
    fn one_round_is_one_em_step_bitwise() {
        let (c, fm) = random_instance(1, 9, 3, 4);
        let trace = recurrent_cross_attention(&c, &fm, &AttentionParams::identity(4), 1).unwrap();
        let m = e_step(&c, fm.as_matrix()).unwrap();
        let next = m_step(&m, fm.as_matrix(), CenterUpdate::PaperSum).unwrap();
        assert_eq!(trace.centers, next);
        assert_eq!(&trace.assignments[0], m.probs());
    }

    #[test]
    fn matches_em_over_three_rounds() {
        for seed in 0..10 {
            let (c, fm) = random_instance(seed, 6, 2, 3);
            let trace = recurrent_cross_attention(&c, &fm, &AttentionParams::identity(3), 3).unwrap();
            let cfg = EmConfig {
                t_max: 3,
                tol: 0.0,
                update: CenterUpdate::PaperSum,
                e_step: EStepKind::Soft,
            };
            let em = em_cluster(fm.as_matrix(), &c, &cfg).unwrap();
            assert_eq!(em.iterations_run, 3);
            assert!(trace.centers.matrix().max_abs_diff(em.centers.matrix()) <= 1e-10);
        }
    }

    #[test]
    fn keys_and_values_projected_once() {
        let (c, fm) = random_instance(2, 10, 3, 4);
        let p = AttentionParams::random(4, 2, 9).unwrap();
        for t in [1, 2, 5] {
            let trace = recurrent_cross_attention(&c, &fm, &p, t).unwrap();
            assert_eq!((trace.key_projections, trace.value_projections), (1, 1));
            assert_eq!(trace.query_projections, t);
            assert_eq!(trace.iterations(), t);
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        let (c, fm) = random_instance(2, 4, 2, 2);
        assert!(matches!(
            recurrent_cross_attention(&c, &fm, &AttentionParams::identity(2), 0),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn stacked_variant_with_shared_queries_equals_recurrent() {
        let (c, fm) = random_instance(3, 12, 3, 4);
        let p = AttentionParams::random(4, 1, 4).unwrap();
        let shared = vec![p.w_q().clone(); 2];
        let a = stacked_unshared_attention(&c, &fm, &p, &shared).unwrap();
        let b = recurrent_cross_attention(&c, &fm, &p, 3).unwrap();
        assert_eq!(a, b);
        let fresh = stacked_unshared_queries(4, 3, 11);
        assert_eq!(fresh.len(), 2);
        let c2 = stacked_unshared_attention(&c, &fm, &p, &fresh).unwrap();
        assert_eq!(c2.flop_count, b.flop_count);
        assert_ne!(c2.centers, b.centers);
    }

    #[test]
    fn clustering_reduces_to_the_recurrent_layer() {
        let (c, fm) = random_instance(5, 15, 3, 4);
        let a = recurrent_clustering(&c, fm.as_matrix(), 4, Similarity::DotProduct, CenterUpdate::PaperSum).unwrap();
        let b = recurrent_cross_attention(&c, &fm, &AttentionParams::identity(4), 4).unwrap();
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn distance_similarity_picks_nearest_center() {
        // dot product prefers the long center; distance prefers the close one
        let x = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let c = CenterSet::from_rows(&[vec![1.1, 0.0], vec![10.0, 0.0]]).unwrap();
        let dot = clustering_assignment(&c, &x, Similarity::DotProduct).unwrap();
        let near = clustering_assignment(&c, &x, Similarity::NegSquaredDistance).unwrap();
        assert!(dot[(1, 0)] > 0.99);
        assert!(near[(0, 0)] > 0.99);
    }

    #[test]
    fn clustering_flops() {
        let (c, fm) = random_instance(6, 20, 4, 3);
        let (k, n, d) = (4u64, 20u64, 3u64);
        let t = 3u64;
        let a = recurrent_clustering(&c, fm.as_matrix(), 3, Similarity::NegSquaredDistance, CenterUpdate::WeightedMean).unwrap();
        assert_eq!(a.flop_count, t * (k * d + k * n * (d + 1) + k * n * d));
        let b = recurrent_clustering(&c, fm.as_matrix(), 3, Similarity::DotProduct, CenterUpdate::WeightedMean).unwrap();
        assert_eq!(b.flop_count, t * 2 * k * n * d);
    }

    proptest! {
        #[test]
        fn assignments_normalised(seed in any::<u64>(), heads in 1usize..3, t in 1usize..4) {
            let (c, fm) = random_instance(seed, 8, 3, 4);
            let p = AttentionParams::random(4, heads, seed ^ 7).unwrap();
            let trace = recurrent_cross_attention(&c, &fm, &p, t).unwrap();
            prop_assert_eq!(trace.assignments.len(), t);
            for m in &trace.assignments {
                for s in m.column_sums() {
                    prop_assert!((s - 1.0).abs() <= SOFTMAX_SUM_TOL);
                }
            }
        }

        #[test]
        fn query_permutation_equivariance(seed in any::<u64>(), t in 1usize..4) {
            let (c, fm) = random_instance(seed, 7, 4, 2);
            let p = AttentionParams::random(2, 1, seed.wrapping_add(1)).unwrap();
            let perm = [2usize, 0, 3, 1];
            let permuted = CenterSet::new(c.matrix().select_rows(&perm)).unwrap();
            let a = recurrent_cross_attention(&c, &fm, &p, t).unwrap();
            let b = recurrent_cross_attention(&permuted, &fm, &p, t).unwrap();
            prop_assert!(b.centers.matrix().max_abs_diff(&a.centers.matrix().select_rows(&perm)) <= 1e-12);
            for (ma, mb) in a.assignments.iter().zip(&b.assignments) {
                prop_assert!(mb.max_abs_diff(&ma.select_rows(&perm)) <= 1e-12);
            }
        }
    }
}
