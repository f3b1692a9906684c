use clustseg_core::attention::{decoder_stack, random_decoder, DecoderConfig, DecoderLayer};
use clustseg_core::dreamy::{scene_adaptive_init, FfnHead};
use clustseg_core::linalg::{FeatureMap, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{print_line, to_json, write_file};
use crate::error::{usage, CliResult};
use crate::settings::Settings;
use crate::DemoArgs;

const KEYS: &[&str] = &["seed", "k", "levels", "t", "d", "heads", "size", "zero-weights", "out"];

#[derive(Serialize)]
struct IterationStats {
    iteration: usize,
    entropy_mean: f64,
    entropy_min: f64,
    entropy_max: f64,
    column_sum_min: f64,
    column_sum_max: f64,
}

#[derive(Serialize)]
struct LayerReport {
    layer: usize,
    level: usize,
    iterations: Vec<IterationStats>,
    attention_center_norms: Vec<f64>,
}

#[derive(Serialize)]
struct Trace {
    seed: u64,
    k_requested: usize,
    k: usize,
    d: usize,
    heads: usize,
    levels: usize,
    t: usize,
    zero_weights: bool,
    level_sizes: Vec<[usize; 2]>,
    layers: Vec<LayerReport>,
    initial_center_norms: Vec<f64>,
    final_center_norms: Vec<f64>,
    max_abs_delta: f64,
    flops: u64,
}

fn row_norms(m: &Matrix) -> Vec<f64> {
    m.iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

fn iteration_stats(iteration: usize, m: &Matrix) -> IterationStats {
    let (k, n) = m.shape();
    let mut entropy = vec![0.0; n];
    for r in 0..k {
        for (e, &p) in entropy.iter_mut().zip(m.row(r)) {
            if p > 0.0 {
                *e -= p * p.ln();
            }
        }
    }
    let sums = m.column_sums();
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    IterationStats {
        iteration,
        entropy_mean: entropy.iter().sum::<f64>() / n as f64,
        entropy_min: fold(&entropy, f64::min, f64::INFINITY),
        entropy_max: fold(&entropy, f64::max, f64::NEG_INFINITY),
        column_sum_min: fold(&sums, f64::min, f64::INFINITY),
        column_sum_max: fold(&sums, f64::max, f64::NEG_INFINITY),
    }
}

/// Finest level drawn uniformly at random, each coarser level the 2×2 mean
/// of the next finer one. Returned coarsest first.
fn synthetic_pyramid(size: usize, levels: usize, d: usize, rng: &mut ChaCha8Rng) -> CliResult<Vec<FeatureMap>> {
    let mut finest = FeatureMap::zeros(size, size, d);
    for y in 0..size {
        for x in 0..size {
            for v in finest.pixel_mut(y, x) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
    }
    let mut pyramid = vec![finest];
    for _ in 1..levels {
        let fine = pyramid.last().unwrap();
        let side = fine.height() / 2;
        let coarse = FeatureMap::from_fn(side, side, d, |y, x, c| {
            let (y2, x2) = (2 * y, 2 * x);
            0.25 * (fine.pixel(y2, x2)[c] + fine.pixel(y2 + 1, x2)[c] + fine.pixel(y2, x2 + 1)[c] + fine.pixel(y2 + 1, x2 + 1)[c])
        });
        pyramid.push(coarse);
    }
    pyramid.reverse();
    Ok(pyramid)
}

pub fn run(args: DemoArgs) -> CliResult<()> {
    let s = Settings::load(args.config.as_deref(), KEYS)?;
    let seed = s.seed(args.seed)?;
    let k = s.or(args.k, "k", 16usize)?;
    let levels = s.or(args.levels, "levels", 3usize)?;
    let t = s.or(args.t, "t", 3usize)?;
    let d = s.or(args.d, "d", 8usize)?;
    let zero_weights = s.switch(args.zero_weights, "zero-weights")?;
    let heads = if zero_weights { 1 } else { s.or(args.heads, "heads", 1usize)? };
    let size = s.or(args.size, "size", 32usize)?;
    let out = s.path(args.out, "out")?;
    if k == 0 || levels == 0 || t == 0 || heads == 0 {
        return Err(usage("--k, --levels, --t and --heads must be at least 1"));
    }
    if d == 0 || d % 2 != 0 || d % heads != 0 {
        return Err(usage("--d must be positive, even and divisible by --heads"));
    }
    let scale = 1usize.checked_shl(levels as u32 - 1).filter(|&f| f <= size && size % f == 0);
    if scale.is_none() {
        return Err(usage(format!("--size {size} must be a positive multiple of 2^(levels-1)")));
    }
    let coarsest = size / scale.unwrap();
    if k > coarsest * coarsest {
        return Err(usage(format!("--k {k} exceeds the {coarsest}x{coarsest} coarsest level")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pyramid = synthetic_pyramid(size, levels, d, &mut rng)?;
    let init_ffn = FfnHead::random(d, 2 * d, seed.wrapping_add(1));
    let c0 = scene_adaptive_init(pyramid.last().unwrap(), &init_ffn, k)?;
    let cfg = DecoderConfig {
        t_iterations: t,
        ..DecoderConfig::standard(levels, c0.k())
    };
    let layers = if zero_weights {
        vec![DecoderLayer::zeros(d); cfg.total_layers()]
    } else {
        random_decoder(d, heads, &cfg, seed.wrapping_add(2))?
    };
    let output = decoder_stack(&c0, &pyramid, &layers, &cfg)?;

    let reports = output
        .traces
        .iter()
        .zip(&output.layer_levels)
        .enumerate()
        .map(|(layer, (trace, &level))| LayerReport {
            layer,
            level,
            iterations: trace.assignments.iter().enumerate().map(|(i, m)| iteration_stats(i + 1, m)).collect(),
            attention_center_norms: row_norms(trace.centers.matrix()),
        })
        .collect();
    let trace = Trace {
        seed,
        k_requested: k,
        k: c0.k(),
        d,
        heads,
        levels,
        t,
        zero_weights,
        level_sizes: pyramid.iter().map(|f| [f.height(), f.width()]).collect(),
        layers: reports,
        initial_center_norms: row_norms(c0.matrix()),
        final_center_norms: row_norms(output.centers.matrix()),
        max_abs_delta: output.centers.matrix().max_abs_diff(c0.matrix()),
        flops: output.flop_count,
    };
    let json = to_json(&trace);
    match out {
        Some(path) => write_file(&path, format!("{json}\n").as_bytes()),
        None => print_line(&json),
    }
}
