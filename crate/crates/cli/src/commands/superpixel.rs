use std::path::{Path, PathBuf};

use clustseg_core::superpixel::{
    asa, compactness, load_image, load_label_pgm, save_label_pgm, save_overlay, segment_superpixels,
    slic_baseline, LabelMap, RgbImage, SuperpixelConfig,
};
use serde::Serialize;

use super::{print_line, to_json};
use crate::error::{usage, CliResult};
use crate::settings::Settings;
use crate::SuperpixelArgs;

const KEYS: &[&str] = &[
    "input",
    "k",
    "t",
    "color-weight",
    "position-weight",
    "min-region-frac",
    "use-ffn",
    "seed",
    "gt",
    "asa",
    "out-labels",
    "out-overlay",
    "baseline-slic",
    "slic-compactness",
    "slic-iters",
    "out-slic-labels",
    "out-slic-overlay",
];

#[derive(Serialize)]
struct MetricsLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<&'static str>,
    k_requested: usize,
    k_actual: usize,
    asa: Option<f64>,
    co: f64,
    iters: usize,
    flops: Option<u64>,
}

fn write_outputs(img: &RgbImage, labels: &LabelMap, pgm: Option<&Path>, overlay: Option<&Path>) -> CliResult<()> {
    if let Some(p) = pgm {
        save_label_pgm(labels, p)?;
    }
    if let Some(p) = overlay {
        save_overlay(img, labels, p)?;
    }
    Ok(())
}

pub fn run(args: SuperpixelArgs) -> CliResult<()> {
    let s = Settings::load(args.config.as_deref(), KEYS)?;
    let input: PathBuf = s.required(args.input, "input")?;
    let k: usize = s.required(args.k, "k")?;
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let defaults = SuperpixelConfig::new(k);
    let t = s.or(args.t, "t", defaults.t_iterations)?;
    if t == 0 {
        return Err(usage("--t must be at least 1"));
    }
    let cfg = SuperpixelConfig {
        t_iterations: t,
        color_weight: s.or(args.color_weight, "color-weight", defaults.color_weight)?,
        position_weight: s.or(args.position_weight, "position-weight", defaults.position_weight)?,
        min_region_frac: s.or(args.min_region_frac, "min-region-frac", defaults.min_region_frac)?,
        use_ffn: s.switch(args.use_ffn, "use-ffn")?,
        ffn_seed: s.seed(args.seed)?,
        ..defaults
    };
    let gt_path = s.path(args.gt, "gt")?;
    if s.switch(args.asa, "asa")? && gt_path.is_none() {
        return Err(usage("ASA requested but no --gt ground truth given"));
    }
    let baseline = s.switch(args.baseline_slic, "baseline-slic")?;
    let slic_m = s.or(args.slic_compactness, "slic-compactness", cfg.position_weight)?;
    let slic_iters = s.or(args.slic_iters, "slic-iters", 10usize)?;
    let out_labels = s.path(args.out_labels, "out-labels")?;
    let out_overlay = s.path(args.out_overlay, "out-overlay")?;
    let out_slic_labels = s.path(args.out_slic_labels, "out-slic-labels")?;
    let out_slic_overlay = s.path(args.out_slic_overlay, "out-slic-overlay")?;

    let img = load_image(&input)?;
    let gt = gt_path.map(load_label_pgm).transpose()?;
    let seg = segment_superpixels(&img, &cfg)?;
    let m = seg.metrics(gt.as_ref())?;
    write_outputs(&img, &seg.labels, out_labels.as_deref(), out_overlay.as_deref())?;
    let tag = |name| baseline.then_some(name);
    let mut lines = vec![MetricsLine {
        method: tag("recurrent"),
        k_requested: m.k_requested,
        k_actual: m.k_actual,
        asa: m.asa,
        co: m.co,
        iters: m.iters,
        flops: Some(m.flops),
    }];

    if baseline {
        let labels = slic_baseline(&img, k, slic_m, slic_iters)?;
        write_outputs(&img, &labels, out_slic_labels.as_deref(), out_slic_overlay.as_deref())?;
        lines.push(MetricsLine {
            method: tag("slic"),
            k_requested: k,
            k_actual: labels.distinct_labels(),
            asa: gt.as_ref().map(|g| asa(&labels, g)).transpose()?,
            co: compactness(&labels),
            iters: slic_iters,
            flops: None,
        });
    }
    for line in &lines {
        print_line(&to_json(line))?;
    }
    Ok(())
}
