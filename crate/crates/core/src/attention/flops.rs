//! Closed-form multiply-add counts of the attention forward passes.
//!
//! With `N = H·W` pixels, `K` queries, width `D` and `T` rounds (one head):
//!
//! | variant           | multiply-adds                          |
//! |-------------------|----------------------------------------|
//! | `Recurrent`       | `2·N·D² + T·(K·D² + 2·K·N·D)`          |
//! | `StackedUnshared` | same as `Recurrent`                    |
//! | `ClusterSoftmax`  | `2·N·D² + K·D² + 2·K·N·D`              |
//! | `HardAssignment`  | `2·N·D² + K·D² + K·N·D + N·D`          |
//! | `Vanilla`         | `3·N·D² + 2·N²·D`                      |
//!
//! `2·N·D²` is the key and value projection, `K·D²` a query projection,
//! `K·N·D` one score product or one aggregation. The hard variant aggregates
//! by scatter-add (`N·D`). `Vanilla` is dense attention with every pixel as a
//! query, the quadratic baseline. The single-pass variants ignore `T`.
//! Multi-head layers add one `K·D²` merge per round (`N·D²` for `Vanilla`).
//! These figures equal the `flop_count` reported by the layer functions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Vanilla,
    Recurrent,
    StackedUnshared,
    ClusterSoftmax,
    HardAssignment,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Vanilla,
        Variant::Recurrent,
        Variant::StackedUnshared,
        Variant::ClusterSoftmax,
        Variant::HardAssignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Recurrent => "recurrent",
            Variant::StackedUnshared => "stacked_unshared",
            Variant::ClusterSoftmax => "cluster_softmax",
            Variant::HardAssignment => "hard",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attention variant {s:?}")))
    }
}

pub fn flop_count(h: usize, w: usize, k: usize, d: usize, t: usize, variant: Variant) -> Result<u64> {
    flop_count_heads(h, w, k, d, t, 1, variant)
}

pub fn flop_count_heads(
    h: usize,
    w: usize,
    k: usize,
    d: usize,
    t: usize,
    heads: usize,
    variant: Variant,
) -> Result<u64> {
    for (what, v) in [("h", h), ("w", w), ("k", k), ("d", d), ("t", t), ("heads", heads)] {
        if v == 0 {
            return Err(Error::Range {
                what,
                value: 0,
                min: 1,
                max: usize::MAX,
            });
        }
    }
    let (n, k, d, t) = ((h * w) as u64, k as u64, d as u64, t as u64);
    let merge = |rows: u64| if heads > 1 { rows * d * d } else { 0 };
    let kv = 2 * n * d * d;
    Ok(match variant {
        Variant::Recurrent | Variant::StackedUnshared => kv + t * (k * d * d + 2 * k * n * d + merge(k)),
        Variant::ClusterSoftmax => kv + k * d * d + 2 * k * n * d + merge(k),
        Variant::HardAssignment => kv + k * d * d + k * n * d + n * d + merge(k),
        Variant::Vanilla => kv + n * d * d + 2 * n * n * d + merge(n),
    })
}

/// Parameters beyond one layer's `W_q, W_k, W_v` (and merge).
pub fn extra_params(d: usize, t: usize, variant: Variant) -> u64 {
    match variant {
        Variant::StackedUnshared => (t.saturating_sub(1) * d * d) as u64,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{
        cluster_softmax_attention_with_stats, hard_assignment_attention_with_stats, recurrent_cross_attention,
        stacked_unshared_attention, stacked_unshared_queries, vanilla_cross_attention_with_stats, AttentionParams,
    };
    use crate::em::CenterSet;
    use crate::linalg::{FeatureMap, Matrix};
    use proptest::prelude::*;

    fn inputs(h: usize, w: usize, k: usize, d: usize) -> (CenterSet, FeatureMap) {
        let fm = FeatureMap::from_fn(h, w, d, |y, x, c| ((y * 7 + x * 3 + c) as f64 * 0.1).sin());
        let c = CenterSet::new(Matrix::from_fn(k, d, |r, col| ((r * 5 + col) as f64 * 0.2).cos())).unwrap();
        (c, fm)
    }

    #[test]
    fn closed_forms_match_instrumented_runs() {
        for &(h, w, k, d, heads) in &[(3, 4, 2, 4, 1), (5, 2, 3, 6, 3), (1, 1, 1, 2, 2)] {
            let (c, fm) = inputs(h, w, k, d);
            let p = AttentionParams::random(d, heads, 3).unwrap();
            for t in 1..4 {
                let r = recurrent_cross_attention(&c, &fm, &p, t).unwrap();
                assert_eq!(r.flop_count, flop_count_heads(h, w, k, d, t, heads, Variant::Recurrent).unwrap());
                let s = stacked_unshared_attention(&c, &fm, &p, &stacked_unshared_queries(d, t, 1)).unwrap();
                assert_eq!(s.flop_count, flop_count_heads(h, w, k, d, t, heads, Variant::StackedUnshared).unwrap());
            }
            let one = |v| flop_count_heads(h, w, k, d, 1, heads, v).unwrap();
            assert_eq!(cluster_softmax_attention_with_stats(&c, &fm, &p).unwrap().1.flop_count, one(Variant::ClusterSoftmax));
            assert_eq!(hard_assignment_attention_with_stats(&c, &fm, &p).unwrap().1.flop_count, one(Variant::HardAssignment));
            // dense baseline: every pixel is a query
            let pixels = CenterSet::new(fm.as_matrix().clone()).unwrap();
            assert_eq!(vanilla_cross_attention_with_stats(&pixels, &fm, &p).unwrap().1.flop_count, one(Variant::Vanilla));
        }
    }

    #[test]
    fn affine_in_t() {
        let (h, w, k, d) = (8u64, 8u64, 5u64, 4u64);
        let f = |t| flop_count(8, 8, 5, 4, t, Variant::Recurrent).unwrap();
        for t in 1..6 {
            assert_eq!(f(t + 1) - f(t), 2 * k * h * w * d + k * d * d);
        }
        assert_eq!(
            flop_count(8, 8, 5, 4, 1, Variant::Recurrent).unwrap(),
            flop_count(8, 8, 5, 4, 1, Variant::ClusterSoftmax).unwrap()
        );
    }

    #[test]
    fn doubling_pixels() {
        let (k, d, t) = (4usize, 8usize, 3usize);
        let r1 = flop_count(16, 16, k, d, t, Variant::Recurrent).unwrap();
        let r2 = flop_count(16, 32, k, d, t, Variant::Recurrent).unwrap();
        let q = (t * k * d * d) as u64;
        assert_eq!(r2 - q, 2 * (r1 - q));
        let score1 = 2 * (256u64 * 256) * d as u64;
        let score2 = 2 * (512u64 * 512) * d as u64;
        assert_eq!(score2, 4 * score1);
        let v1 = flop_count(16, 16, k, d, t, Variant::Vanilla).unwrap();
        assert_eq!(v1 - score1, 3 * 256 * (d * d) as u64);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(flop_count(4, 4, 2, 2, 0, Variant::Recurrent).is_err());
        assert!(flop_count(0, 4, 2, 2, 1, Variant::Vanilla).is_err());
        assert_eq!("stacked_unshared".parse::<Variant>().unwrap(), Variant::StackedUnshared);
        assert_eq!(extra_params(8, 3, Variant::StackedUnshared), 128);
        assert_eq!(extra_params(8, 3, Variant::Recurrent), 0);
    }

    proptest! {
        #[test]
        fn recurrent_cheaper_when_tk_below_hw(h in 1usize..64, w in 1usize..64, k in 1usize..64, d in 1usize..64, t in 1usize..8) {
            prop_assume!(t * k < h * w);
            prop_assert!(
                flop_count(h, w, k, d, t, Variant::Recurrent).unwrap()
                    < flop_count(h, w, k, d, t, Variant::Vanilla).unwrap()
            );
        }
    }
}
