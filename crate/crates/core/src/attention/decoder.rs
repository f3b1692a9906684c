use crate::em::CenterSet;
use crate::error::{Error, Result};
use crate::ffn::FeedForward;
use crate::linalg::{FeatureMap, Matrix};

use super::{recurrent_cross_attention, AttentionParams, LayerTrace};

/// Layout of the decoder hierarchy over a feature pyramid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    /// Layer count per pyramid level, ordered coarse to fine.
    pub layers_per_level: Vec<usize>,
    pub t_iterations: usize,
    pub k: usize,
}

impl DecoderConfig {
    /// Two layers on each of the three finest levels (fewer if the pyramid is
    /// shallower) with three rounds per layer.
    pub fn standard(levels: usize, k: usize) -> Self {
        let layers_per_level = (0..levels).map(|l| if l + 3 >= levels { 2 } else { 0 }).collect();
        Self {
            layers_per_level,
            t_iterations: 3,
            k,
        }
    }

    pub fn levels(&self) -> usize {
        self.layers_per_level.len()
    }

    pub fn total_layers(&self) -> usize {
        self.layers_per_level.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_iterations == 0 {
            return Err(Error::Range {
                what: "t_iterations",
                value: 0,
                min: 1,
                max: usize::MAX,
            });
        }
        if self.total_layers() == 0 {
            return Err(Error::Config("decoder needs at least one layer".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("decoder needs at least one query".into()));
        }
        Ok(())
    }

    /// Pyramid level of every layer in execution order.
    pub fn layer_levels(&self) -> Vec<usize> {
        self.layers_per_level
            .iter()
            .enumerate()
            .flat_map(|(level, &n)| std::iter::repeat_n(level, n))
            .collect()
    }
}

/// One decoder block: recurrent cross-attention then a feed-forward block,
/// each with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub attention: AttentionParams,
    pub mlp: FeedForward,
}

const MATRICES_PER_LAYER: usize = 8;

impl DecoderLayer {
    pub fn new(attention: AttentionParams, mlp: FeedForward) -> Result<Self> {
        let d = attention.dim();
        if mlp.input_dim() != d || mlp.output_dim() != d {
            return Err(Error::Shape {
                op: "DecoderLayer::new",
                left: (d, d),
                right: (mlp.input_dim(), mlp.output_dim()),
            });
        }
        Ok(Self { attention, mlp })
    }

    /// Seeded Gaussian weights; the feed-forward hidden width is `2·d`.
    pub fn random(d: usize, heads: usize, seed: u64) -> Result<Self> {
        let attention = AttentionParams::random(d, heads, seed)?;
        let mlp = FeedForward::random(d, 2 * d, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
        Self::new(attention, mlp)
    }

    /// All projections and the feed-forward output are zero.
    pub fn zeros(d: usize) -> Self {
        Self::new(AttentionParams::zeros(d), FeedForward::zero_output(d, 2 * d, 0)).expect("consistent shapes")
    }

    /// Identity projections with a silent feed-forward block.
    pub fn em_step(d: usize) -> Self {
        Self::new(AttentionParams::identity(d), FeedForward::zero_output(d, 2 * d, 0)).expect("consistent shapes")
    }

    pub fn dim(&self) -> usize {
        self.attention.dim()
    }

    /// Matrix sequence for [`crate::weights`]: a `1 × 2` header
    /// `[layer count, heads]`, then per layer
    /// `W_q, W_k, W_v, head_merge, W₁, b₁ (1 × Dh), W₂, b₂ (1 × D)`.
    pub fn to_bundle(layers: &[DecoderLayer]) -> Result<Vec<Matrix>> {
        let heads = layers.first().map_or(1, |l| l.attention.heads());
        if layers.iter().any(|l| l.attention.heads() != heads) {
            return Err(Error::Config("all layers in a bundle must share the head count".into()));
        }
        let mut out = vec![Matrix::from_vec(1, 2, vec![layers.len() as f64, heads as f64])?];
        for l in layers {
            let a = &l.attention;
            out.extend([a.w_q().clone(), a.w_k().clone(), a.w_v().clone(), a.head_merge().clone()]);
            out.push(l.mlp.w1().clone());
            out.push(Matrix::from_vec(1, l.mlp.b1().len(), l.mlp.b1().to_vec())?);
            out.push(l.mlp.w2().clone());
            out.push(Matrix::from_vec(1, l.mlp.b2().len(), l.mlp.b2().to_vec())?);
        }
        Ok(out)
    }

    pub fn from_bundle(matrices: &[Matrix]) -> Result<Vec<DecoderLayer>> {
        let bad = |m: &str| Error::Config(format!("decoder bundle: {m}"));
        let meta = matrices.first().ok_or_else(|| bad("missing header"))?;
        if meta.shape() != (1, 2) {
            return Err(bad("header must be 1x2"));
        }
        let (count, heads) = (meta[(0, 0)], meta[(0, 1)]);
        if count.fract() != 0.0 || heads.fract() != 0.0 || count < 0.0 || heads < 1.0 {
            return Err(bad("header entries must be whole numbers"));
        }
        let (count, heads) = (count as usize, heads as usize);
        if matrices.len() != 1 + count * MATRICES_PER_LAYER {
            return Err(bad(&format!(
                "expected {} matrices for {count} layers, found {}",
                1 + count * MATRICES_PER_LAYER,
                matrices.len()
            )));
        }
        matrices[1..]
            .chunks_exact(MATRICES_PER_LAYER)
            .map(|m| {
                let attention = AttentionParams::new(m[0].clone(), m[1].clone(), m[2].clone(), heads, m[3].clone())?;
                if m[5].rows() != 1 || m[7].rows() != 1 {
                    return Err(bad("biases must be stored as single rows"));
                }
                let mlp = FeedForward::new(m[4].clone(), m[5].row(0).to_vec(), m[6].clone(), m[7].row(0).to_vec())?;
                DecoderLayer::new(attention, mlp)
            })
            .collect()
    }
}

/// Seeded, unshared weights for every layer of `cfg`.
pub fn random_decoder(d: usize, heads: usize, cfg: &DecoderConfig, seed: u64) -> Result<Vec<DecoderLayer>> {
    (0..cfg.total_layers())
        .map(|l| DecoderLayer::random(d, heads, seed.wrapping_add(l as u64 * 1_000_003)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    pub centers: CenterSet,
    pub traces: Vec<LayerTrace>,
    /// Pyramid level each trace was computed on.
    pub layer_levels: Vec<usize>,
    /// Attention plus feed-forward multiply-adds over the whole stack.
    pub flop_count: u64,
}

/// Runs the decoder hierarchy: for every layer on level `l`,
/// `C ← C + RCA(I_l, C)` then `C ← C + MLP(C)`.
pub fn decoder_stack(
    c0: &CenterSet,
    pyramid: &[FeatureMap],
    layers: &[DecoderLayer],
    cfg: &DecoderConfig,
) -> Result<DecoderOutput> {
    cfg.validate()?;
    if pyramid.len() != cfg.levels() {
        return Err(Error::Config(format!(
            "pyramid has {} levels but the config describes {}",
            pyramid.len(),
            cfg.levels()
        )));
    }
    if layers.len() != cfg.total_layers() {
        return Err(Error::Config(format!(
            "{} layer parameter sets supplied for {} layers",
            layers.len(),
            cfg.total_layers()
        )));
    }
    if c0.k() != cfg.k {
        return Err(Error::Config(format!("config expects {} queries, got {}", cfg.k, c0.k())));
    }
    let layer_levels = cfg.layer_levels();
    let mut centers = c0.matrix().clone();
    let mut traces = Vec::with_capacity(layers.len());
    let mut flops = 0u64;
    for (layer, &level) in layers.iter().zip(&layer_levels) {
        let trace = recurrent_cross_attention(&CenterSet::new(centers.clone())?, &pyramid[level], &layer.attention, cfg.t_iterations)?;
        centers.add_assign(trace.centers.matrix())?;
        let mlp_out = layer.mlp.forward(&centers)?;
        centers.add_assign(&mlp_out)?;
        flops += trace.flop_count + layer.mlp.flops(centers.rows());
        traces.push(trace);
    }
    Ok(DecoderOutput {
        centers: CenterSet::new(centers)?,
        traces,
        layer_levels,
        flop_count: flops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{e_step, m_step, CenterUpdate};
    use crate::linalg::dot;
    use crate::weights::{decode_bundle, encode_bundle};

    fn pyramid(d: usize) -> Vec<FeatureMap> {
        vec![
            FeatureMap::from_fn(4, 4, d, |y, x, c| ((y * 4 + x) as f64 * 0.31 + c as f64 * 0.7).sin()),
            FeatureMap::from_fn(8, 8, d, |y, x, c| ((y * 8 + x) as f64 * 0.13 - c as f64 * 0.4).cos()),
        ]
    }

    #[test]
    fn standard_layout() {
        let cfg = DecoderConfig::standard(4, 10);
        assert_eq!(cfg.layers_per_level, vec![0, 2, 2, 2]);
        assert_eq!(cfg.total_layers(), 6);
        assert_eq!(cfg.t_iterations, 3);
        assert_eq!(DecoderConfig::standard(2, 3).layers_per_level, vec![2, 2]);
        assert_eq!(cfg.layer_levels(), vec![1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn single_em_layer() {
        let p = pyramid(3);
        let c0 = CenterSet::from_rows(&[vec![0.2, -0.1, 0.4], vec![-0.3, 0.5, 0.0]]).unwrap();
        let cfg = DecoderConfig {
            layers_per_level: vec![0, 1],
            t_iterations: 1,
            k: 2,
        };
        let out = decoder_stack(&c0, &p, &[DecoderLayer::em_step(3)], &cfg).unwrap();
        let x = p[1].as_matrix();
        let step = m_step(&e_step(&c0, x).unwrap(), x, CenterUpdate::PaperSum).unwrap();
        let expected = c0.matrix().add(step.matrix()).unwrap();
        assert!(out.centers.matrix().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn zero_layers_keep_centers() {
        let p = pyramid(4);
        let c0 = CenterSet::new(Matrix::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.5)).unwrap();
        let cfg = DecoderConfig {
            layers_per_level: vec![3, 2],
            t_iterations: 2,
            k: 3,
        };
        let out = decoder_stack(&c0, &p, &vec![DecoderLayer::zeros(4); 5], &cfg).unwrap();
        assert_eq!(out.centers, c0);
        assert_eq!(out.traces.len(), 5);
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let p = pyramid(2);
        let c0 = CenterSet::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let cfg = DecoderConfig {
            layers_per_level: vec![1, 1],
            t_iterations: 1,
            k: 1,
        };
        assert!(matches!(decoder_stack(&c0, &p, &[DecoderLayer::zeros(2)], &cfg), Err(Error::Config(_))));
        assert!(matches!(decoder_stack(&c0, &p[..1], &vec![DecoderLayer::zeros(2); 2], &cfg), Err(Error::Config(_))));
    }

    // Straight-line scalar re-implementation of the stack.
    fn scripted(c0: &[Vec<f64>], pyr: &[FeatureMap], layers: &[DecoderLayer], levels: &[usize], t: usize) -> Vec<Vec<f64>> {
        let mat = |m: &Matrix| -> Vec<Vec<f64>> { m.iter_rows().map(|r| r.to_vec()).collect() };
        let mul = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter()
                .map(|r| (0..b[0].len()).map(|j| (0..r.len()).map(|i| r[i] * b[i][j]).sum()).collect())
                .collect()
        };
        let mut c = c0.to_vec();
        for (layer, &lvl) in layers.iter().zip(levels) {
            let x = mat(pyr[lvl].as_matrix());
            let k = mul(&x, &mat(layer.attention.w_k()));
            let v = mul(&x, &mat(layer.attention.w_v()));
            let mut cur = c.clone();
            for _ in 0..t {
                let q = mul(&cur, &mat(layer.attention.w_q()));
                let mut m = vec![vec![0.0; x.len()]; q.len()];
                for n in 0..x.len() {
                    let s: Vec<f64> = q.iter().map(|qr| dot(qr, &k[n])).collect();
                    let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = s.iter().map(|v| (v - mx).exp()).sum();
                    for a in 0..q.len() {
                        m[a][n] = (s[a] - mx).exp() / z;
                    }
                }
                cur = mul(&m, &v);
            }
            for (cr, ur) in c.iter_mut().zip(&cur) {
                for (a, b) in cr.iter_mut().zip(ur) {
                    *a += b;
                }
            }
            let mut h = mul(&c, &mat(layer.mlp.w1()));
            for r in h.iter_mut() {
                for (v, b) in r.iter_mut().zip(layer.mlp.b1()) {
                    *v = (*v + b).max(0.0);
                }
            }
            let o = mul(&h, &mat(layer.mlp.w2()));
            for (cr, or) in c.iter_mut().zip(&o) {
                for ((a, b), bias) in cr.iter_mut().zip(or).zip(layer.mlp.b2()) {
                    *a += b + bias;
                }
            }
        }
        c
    }

    #[test]
    fn matches_scripted_stack() {
        let p = pyramid(4);
        let c0 = CenterSet::new(Matrix::from_fn(3, 4, |r, c| ((r * 4 + c) as f64 * 0.9).sin())).unwrap();
        let cfg = DecoderConfig {
            layers_per_level: vec![1, 2],
            t_iterations: 3,
            k: 3,
        };
        let layers = random_decoder(4, 1, &cfg, 42).unwrap();
        let out = decoder_stack(&c0, &p, &layers, &cfg).unwrap();
        let rows: Vec<Vec<f64>> = c0.matrix().iter_rows().map(|r| r.to_vec()).collect();
        let want = Matrix::from_rows(&scripted(&rows, &p, &layers, &cfg.layer_levels(), 3)).unwrap();
        assert!(out.centers.matrix().max_abs_diff(&want) <= 1e-10);
        assert_eq!(out.layer_levels, vec![0, 1, 1]);
    }

    #[test]
    fn bundle_round_trip() {
        let cfg = DecoderConfig::standard(3, 4);
        let layers = random_decoder(6, 2, &cfg, 7).unwrap();
        let bytes = encode_bundle(&DecoderLayer::to_bundle(&layers).unwrap()).unwrap();
        let back = DecoderLayer::from_bundle(&decode_bundle(&bytes).unwrap()).unwrap();
        assert_eq!(back, layers);
        let mut mats = DecoderLayer::to_bundle(&layers).unwrap();
        mats.pop();
        assert!(DecoderLayer::from_bundle(&mats).is_err());
    }

    #[test]
    fn layers_are_unshared() {
        let layers = random_decoder(4, 1, &DecoderConfig::standard(3, 2), 1).unwrap();
        for (i, a) in layers.iter().enumerate() {
            for b in &layers[i + 1..] {
                assert_ne!(a.attention.w_q(), b.attention.w_q());
            }
        }
    }
}
