use crate::attention::{clustering_assignment, recurrent_clustering, Similarity};
use crate::em::{argmax_columns, CenterSet, CenterUpdate};
use crate::error::{Error, Result};
use crate::ffn::FeedForward;
use crate::linalg::{grid_coords, grid_sample, FeatureMap};

use super::{asa, compactness, enforce_connectivity, rgb_to_lab, LabelMap, RgbImage};

/// Knobs of [`segment_superpixels`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelConfig {
    pub k_requested: usize,
    pub t_iterations: usize,
    /// Multiplies the three Lab channels.
    pub color_weight: f64,
    /// Multiplies the grid-normalised coordinates; plays the role of SLIC's `m`.
    pub position_weight: f64,
    /// Components below this fraction of the mean superpixel area are merged.
    pub min_region_frac: f64,
    /// Pass pixel features through a seeded random feed-forward block first.
    pub use_ffn: bool,
    pub ffn_seed: u64,
    pub center_update: CenterUpdate,
    pub similarity: Similarity,
}

impl SuperpixelConfig {
    pub fn new(k_requested: usize) -> Self {
        Self {
            k_requested,
            t_iterations: 3,
            color_weight: 1.0,
            position_weight: 20.0,
            min_region_frac: 0.25,
            use_ffn: false,
            ffn_seed: 0,
            center_update: CenterUpdate::WeightedMean,
            similarity: Similarity::NegSquaredDistance,
        }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        let n = height * width;
        if self.k_requested == 0 || self.k_requested > n {
            return Err(Error::Range {
                what: "k_requested",
                value: self.k_requested,
                min: 1,
                max: n,
            });
        }
        if self.t_iterations == 0 {
            return Err(Error::Range {
                what: "t_iterations",
                value: 0,
                min: 1,
                max: usize::MAX,
            });
        }
        for (name, v) in [
            ("color_weight", self.color_weight),
            ("position_weight", self.position_weight),
            ("min_region_frac", self.min_region_frac),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.color_weight == 0.0 && self.position_weight == 0.0 {
            return Err(Error::Config("color_weight and position_weight cannot both be zero".into()));
        }
        Ok(())
    }
}

/// Grid spacing `S = sqrt(HW / k)`.
pub fn grid_interval(height: usize, width: usize, k: usize) -> f64 {
    ((height * width) as f64 / k as f64).sqrt()
}

/// `[cw·L, cw·a, cw·b, pw·x/S, pw·y/S]` with `S` the seed grid spacing.
pub fn build_pixel_features(lab: &FeatureMap, cfg: &SuperpixelConfig) -> Result<FeatureMap> {
    if lab.dim() != 3 {
        return Err(Error::Shape {
            op: "build_pixel_features",
            left: (lab.len(), 3),
            right: lab.as_matrix().shape(),
        });
    }
    cfg.validate(lab.height(), lab.width())?;
    let k_actual = grid_coords(lab.height(), lab.width(), cfg.k_requested)?.len();
    let scale = cfg.position_weight / grid_interval(lab.height(), lab.width(), k_actual);
    Ok(FeatureMap::from_fn(lab.height(), lab.width(), 5, |y, x, c| match c {
        0..=2 => cfg.color_weight * lab.pixel(y, x)[c],
        3 => scale * x as f64,
        _ => scale * y as f64,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Connected superpixels, ids `0..k_actual`.
    pub labels: LabelMap,
    /// Nearest-center labels before connectivity repair.
    pub raw_labels: LabelMap,
    pub seeds: Vec<(usize, usize)>,
    pub k_requested: usize,
    /// Superpixels in the final map.
    pub k_actual: usize,
    pub iterations: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMetrics {
    pub k_requested: usize,
    pub k_actual: usize,
    pub asa: Option<f64>,
    pub co: f64,
    pub iters: usize,
    pub flops: u64,
}

impl Segmentation {
    pub fn metrics(&self, gt: Option<&LabelMap>) -> Result<SuperpixelMetrics> {
        Ok(SuperpixelMetrics {
            k_requested: self.k_requested,
            k_actual: self.k_actual,
            asa: gt.map(|g| asa(&self.labels, g)).transpose()?,
            co: compactness(&self.labels),
            iters: self.iterations,
            flops: self.flops,
        })
    }
}

/// Lab features, grid seeds, `T` rounds of recurrent clustering, a final
/// nearest-center assignment and connectivity repair.
pub fn segment_superpixels(img: &RgbImage, cfg: &SuperpixelConfig) -> Result<Segmentation> {
    let features = build_pixel_features(&rgb_to_lab(img), cfg)?;
    segment_features(&features, cfg)
}

/// [`segment_superpixels`] on precomputed pixel features.
pub fn segment_features(features: &FeatureMap, cfg: &SuperpixelConfig) -> Result<Segmentation> {
    let (h, w) = (features.height(), features.width());
    cfg.validate(h, w)?;
    let features = if cfg.use_ffn {
        let ffn = FeedForward::random(features.dim(), 2 * features.dim(), cfg.ffn_seed);
        FeatureMap::from_matrix(h, w, ffn.forward(features.as_matrix())?)?
    } else {
        features.clone()
    };
    let seeds = grid_sample(&features, cfg.k_requested)?;
    let x = features.as_matrix();
    let trace = recurrent_clustering(
        &CenterSet::new(seeds.features)?,
        x,
        cfg.t_iterations,
        cfg.similarity,
        cfg.center_update,
    )?;
    let assignment = clustering_assignment(&trace.centers, x, cfg.similarity)?;
    let (k, n, d) = (trace.centers.k() as u64, x.rows() as u64, x.cols() as u64);
    let final_flops = match cfg.similarity {
        Similarity::DotProduct => k * n * d,
        Similarity::NegSquaredDistance => k * d + k * n * (d + 1),
    };
    let raw_labels = LabelMap::new(h, w, argmax_columns(&assignment))?;
    let labels = enforce_connectivity(&raw_labels, cfg.min_region_frac);
    Ok(Segmentation {
        k_actual: labels.distinct_labels(),
        labels,
        raw_labels,
        seeds: seeds.coords,
        k_requested: cfg.k_requested,
        iterations: trace.iterations(),
        flops: trace.flop_count + final_flops,
    })
}

/// Nearest seed by Euclidean pixel distance, ties to the lowest seed index.
pub fn seed_voronoi(height: usize, width: usize, seeds: &[(usize, usize)]) -> Result<LabelMap> {
    if seeds.is_empty() {
        return Err(Error::Contract("seed_voronoi needs at least one seed".into()));
    }
    LabelMap::from_fn(height, width, |y, x| {
        let dist = |&(sy, sx): &(usize, usize)| {
            let (dy, dx) = (sy as i64 - y as i64, sx as i64 - x as i64);
            dy * dy + dx * dx
        };
        let mut best = 0;
        for (i, s) in seeds.iter().enumerate().skip(1) {
            if dist(s) < dist(&seeds[best]) {
                best = i;
            }
        }
        best
    })
}
