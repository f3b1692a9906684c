//! Procedural test images with exact ground-truth segmentations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LabelMap, RgbImage};

pub const QUADRANT_COLORS: [[u8; 3]; 4] = [[200, 40, 40], [40, 200, 40], [40, 40, 200], [220, 220, 60]];

/// A `size × size` image split into four flat quadrants, labelled
/// 0 (top-left), 1 (top-right), 2 (bottom-left), 3 (bottom-right).
pub fn quadrants(size: usize) -> (RgbImage, LabelMap) {
    let half = size / 2;
    let q = |y: usize, x: usize| usize::from(y >= half) * 2 + usize::from(x >= half);
    let img = RgbImage::from_fn(size, size, |y, x| QUADRANT_COLORS[q(y, x)]).expect("positive size");
    (img, LabelMap::from_fn(size, size, q).expect("positive size"))
}

pub fn constant(height: usize, width: usize, rgb: [u8; 3]) -> RgbImage {
    RgbImage::from_fn(height, width, |_, _| rgb).expect("positive size")
}

/// Irregular regions (a warped Voronoi tessellation of random sites), each
/// filled with its own base colour, a linear shading ramp and a sinusoidal
/// texture, plus Gaussian pixel noise. The ground truth is the region index.
pub fn procedural_scene(height: usize, width: usize, regions: usize, seed: u64) -> (RgbImage, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = regions.max(1);
    struct Region {
        site: (f64, f64),
        base: [f64; 3],
        ramp: (f64, f64),
        freq: (f64, f64),
        amp: f64,
    }
    let layout: Vec<Region> = (0..regions)
        .map(|_| Region {
            site: (rng.random_range(0.0..height as f64), rng.random_range(0.0..width as f64)),
            base: [rng.random_range(30.0..225.0), rng.random_range(30.0..225.0), rng.random_range(30.0..225.0)],
            ramp: (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)),
            freq: (rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)),
            amp: rng.random_range(0.0..25.0),
        })
        .collect();
    let (wa, wf) = (rng.random_range(1.0..4.0), rng.random_range(0.08..0.25));
    let noise = Normal::new(0.0, 8.0).expect("positive std");

    let gt = LabelMap::from_fn(height, width, |y, x| {
        let (yf, xf) = (y as f64 + wa * (x as f64 * wf).sin(), x as f64 + wa * (y as f64 * wf).cos());
        let mut best = (f64::INFINITY, 0);
        for (i, r) in layout.iter().enumerate() {
            let d = (yf - r.site.0).powi(2) + (xf - r.site.1).powi(2);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    })
    .expect("positive size");
    let img = RgbImage::from_fn(height, width, |y, x| {
        let r = &layout[gt.get(y, x)];
        let (dy, dx) = (y as f64 - r.site.0, x as f64 - r.site.1);
        let shade = r.ramp.0 * dy + r.ramp.1 * dx + r.amp * (r.freq.0 * y as f64 + r.freq.1 * x as f64).sin();
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            *out = (r.base[c] + shade + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
    .expect("positive size");
    (img, gt)
}

pub struct Scene {
    pub name: String,
    pub image: RgbImage,
    pub gt: LabelMap,
}

/// `count` square scenes with a varying number of regions.
pub fn scene_set(count: usize, size: usize, seed: u64) -> Vec<Scene> {
    (0..count)
        .map(|i| {
            let regions = 12 + 10 * i;
            let (image, gt) = procedural_scene(size, size, regions, seed.wrapping_add(i as u64));
            Scene {
                name: format!("scene{i}_r{regions}"),
                image,
                gt,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrant_layout() {
        let (img, gt) = quadrants(6);
        assert_eq!(gt.get(0, 0), 0);
        assert_eq!(gt.get(0, 5), 1);
        assert_eq!(gt.get(5, 0), 2);
        assert_eq!(img.pixel(5, 5), QUADRANT_COLORS[3]);
    }

    #[test]
    fn scenes_are_reproducible() {
        let a = procedural_scene(20, 30, 5, 7);
        let b = procedural_scene(20, 30, 5, 7);
        assert_eq!(a, b);
        assert!(a.1.distinct_labels() > 1);
    }
}
