use std::time::Instant;

use clustseg_core::attention::{
    cluster_softmax_attention_with_stats, extra_params, flop_count_heads, hard_assignment_attention_with_stats,
    recurrent_cross_attention, stacked_unshared_attention, stacked_unshared_queries,
    vanilla_cross_attention_with_stats, AttentionParams, Variant,
};
use clustseg_core::em::CenterSet;
use clustseg_core::linalg::{FeatureMap, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{print_line, write_file};
use crate::error::{data, usage, CliResult};
use crate::settings::{parse_list, Settings};
use crate::BenchArgs;

const KEYS: &[&str] = &["hw-list", "k", "d", "heads", "t-list", "variant-list", "repeats", "seed", "out"];

#[derive(Serialize, Debug, Clone)]
pub struct Record {
    pub variant: &'static str,
    pub h: usize,
    pub w: usize,
    pub hw: usize,
    pub k: usize,
    pub d: usize,
    pub heads: usize,
    pub t: usize,
    pub flops: u64,
    pub extra_params: u64,
    pub wall_ms_median: Option<f64>,
    pub wall_ms: Vec<f64>,
}

pub fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let parse = |p: &str| {
        p.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| usage(format!("size {s:?}: expected a positive integer, N or HxW")))
    };
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

pub struct Inputs {
    pub centers: CenterSet,
    pub features: FeatureMap,
    pub params: AttentionParams,
    pub extra_w_q: Vec<Matrix>,
}

impl Inputs {
    pub fn new(h: usize, w: usize, k: usize, d: usize, heads: usize, t: usize, seed: u64) -> CliResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let centers = CenterSet::new(uniform(k, d))?;
        let features = FeatureMap::from_matrix(h, w, uniform(h * w, d))?;
        Ok(Self {
            centers,
            features,
            params: AttentionParams::random(d, heads, seed.wrapping_add(1))?,
            extra_w_q: stacked_unshared_queries(d, t, seed.wrapping_add(2)),
        })
    }

    /// One forward pass; returns the counted multiply-adds.
    pub fn run(&self, variant: Variant, t: usize) -> CliResult<u64> {
        let (c, i, p) = (&self.centers, &self.features, &self.params);
        Ok(match variant {
            Variant::Recurrent => recurrent_cross_attention(c, i, p, t)?.flop_count,
            Variant::StackedUnshared => stacked_unshared_attention(c, i, p, &self.extra_w_q[..t - 1])?.flop_count,
            Variant::ClusterSoftmax => cluster_softmax_attention_with_stats(c, i, p)?.1.flop_count,
            Variant::HardAssignment => hard_assignment_attention_with_stats(c, i, p)?.1.flop_count,
            Variant::Vanilla => {
                let queries = CenterSet::new(i.as_matrix().clone())?;
                vanilla_cross_attention_with_stats(&queries, i, p)?.1.flop_count
            }
        })
    }
}

fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

#[allow(clippy::too_many_arguments)]
pub fn measure(
    variant: Variant,
    (h, w): (usize, usize),
    k: usize,
    d: usize,
    heads: usize,
    t: usize,
    repeats: usize,
    seed: u64,
) -> CliResult<Record> {
    let flops = flop_count_heads(h, w, k, d, t, heads, variant)?;
    let inputs = Inputs::new(h, w, k, d, heads, t, seed)?;
    let counted = inputs.run(variant, t)?;
    if counted != flops {
        return Err(data(format!(
            "{} at {h}x{w}: instrumented count {counted} differs from closed form {flops}",
            variant.name()
        )));
    }
    let mut wall_ms = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        inputs.run(variant, t)?;
        wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Record {
        variant: variant.name(),
        h,
        w,
        hw: h * w,
        k,
        d,
        heads,
        t,
        flops,
        extra_params: extra_params(d, t, variant),
        wall_ms_median: median(&wall_ms),
        wall_ms,
    })
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    let s = Settings::load(args.config.as_deref(), KEYS)?;
    let sizes = parse_list::<String>(&s.or(args.hw_list, "hw-list", "32,64".to_string())?, "hw")?
        .iter()
        .map(|e| parse_size(e))
        .collect::<CliResult<Vec<_>>>()?;
    let k = s.or(args.k, "k", 32usize)?;
    let d = s.or(args.d, "d", 64usize)?;
    let heads = s.or(args.heads, "heads", 1usize)?;
    if k == 0 || d == 0 || heads == 0 || d % heads != 0 {
        return Err(usage("--k, --d and --heads must be positive with heads dividing d"));
    }
    let ts = parse_list::<usize>(&s.or(args.t_list, "t-list", "1,2,3".to_string())?, "t")?;
    if ts.contains(&0) {
        return Err(usage("--t-list entries must be at least 1"));
    }
    let variants = parse_list::<String>(&s.or(args.variant_list, "variant-list", "recurrent,vanilla".to_string())?, "variant")?
        .iter()
        .map(|v| v.parse::<Variant>().map_err(|e| usage(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    let repeats = s.or(args.repeats, "repeats", 5usize)?;
    let seed = s.seed(args.seed)?;
    let out = s.path(args.out, "out")?;

    for &(h, w) in &sizes {
        if k > h * w {
            return Err(usage(format!("--k {k} exceeds the {h}x{w} pixel count")));
        }
    }
    let mut records = Vec::new();
    for &size in &sizes {
        for &t in &ts {
            for &variant in &variants {
                records.push(measure(variant, size, k, d, heads, t, repeats, seed)?);
            }
        }
    }
    let json = serde_json::to_string_pretty(&records).expect("records serialise");
    match out {
        Some(path) => write_file(&path, format!("{json}\n").as_bytes())?,
        None => print_line(&json)?,
    }
    for r in &records {
        if let Some(ms) = r.wall_ms_median {
            eprintln!("{:<16} {:>5}x{:<5} t={} flops={} median {:.3} ms", r.variant, r.h, r.w, r.t, r.flops, ms);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64").unwrap(), (64, 64));
        assert_eq!(parse_size("32x48").unwrap(), (32, 48));
        assert!(parse_size("0").is_err());
        assert!(parse_size("4x").is_err());
    }

    #[test]
    fn measured_records_match_closed_forms() {
        for v in Variant::ALL {
            for t in 1..=3 {
                let r = measure(v, (6, 5), 3, 4, 2, t, 1, 7).unwrap();
                assert_eq!(r.flops, flop_count_heads(6, 5, 3, 4, t, 2, v).unwrap());
                assert_eq!(r.wall_ms.len(), 1);
            }
        }
    }

    #[test]
    fn median_of_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
