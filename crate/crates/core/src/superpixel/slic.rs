use crate::error::Result;
use crate::linalg::grid_coords;

use super::pipeline::{grid_interval, seed_voronoi};
use super::{enforce_connectivity, rgb_to_lab, LabelMap, RgbImage};

/// Classic SLIC: grid seeds, nearest-center search restricted to a
/// `2S × 2S` window around each center with distance
/// `dc² + (ds/S)²·m²`, and mean recomputation. After `iters` updates the
/// pixels are assigned once more, and the same connectivity repair as the
/// main pipeline is applied (`min_region_frac` 0.25). With `iters = 0` the
/// result is the seed Voronoi tessellation.
pub fn slic_baseline(img: &RgbImage, k_requested: usize, compactness_knob: f64, iters: usize) -> Result<LabelMap> {
    slic_with_connectivity(img, k_requested, compactness_knob, iters, 0.25)
}

pub fn slic_with_connectivity(
    img: &RgbImage,
    k_requested: usize,
    compactness_knob: f64,
    iters: usize,
    min_region_frac: f64,
) -> Result<LabelMap> {
    let (h, w) = (img.height(), img.width());
    let seeds = grid_coords(h, w, k_requested)?;
    if iters == 0 {
        return Ok(enforce_connectivity(&seed_voronoi(h, w, &seeds)?, min_region_frac));
    }
    let lab = rgb_to_lab(img);
    let s = grid_interval(h, w, seeds.len());
    let spatial = (compactness_knob / s).powi(2);
    let pixel = |p: usize| -> [f64; 5] {
        let c = lab.as_matrix().row(p);
        [c[0], c[1], c[2], (p % w) as f64, (p / w) as f64]
    };
    let distance = |a: &[f64; 5], b: &[f64; 5]| -> f64 {
        let dc = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        let ds = (a[3] - b[3]).powi(2) + (a[4] - b[4]).powi(2);
        dc + ds * spatial
    };
    let mut centers: Vec<[f64; 5]> = seeds.iter().map(|&(y, x)| pixel(y * w + x)).collect();

    let assign = |centers: &[[f64; 5]]| -> Vec<usize> {
        let mut best = vec![f64::INFINITY; h * w];
        let mut label = vec![usize::MAX; h * w];
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c[3].round() as i64, c[4].round() as i64);
            let r = s.ceil() as i64;
            let (y0, y1) = ((cy - r).max(0) as usize, ((cy + r).min(h as i64 - 1)) as usize);
            let (x0, x1) = ((cx - r).max(0) as usize, ((cx + r).min(w as i64 - 1)) as usize);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let d = distance(c, &pixel(p));
                    if d < best[p] {
                        best[p] = d;
                        label[p] = ci;
                    }
                }
            }
        }
        for p in 0..h * w {
            if label[p] == usize::MAX {
                let px = pixel(p);
                let mut b = 0;
                for ci in 1..centers.len() {
                    if distance(&centers[ci], &px) < distance(&centers[b], &px) {
                        b = ci;
                    }
                }
                label[p] = b;
            }
        }
        label
    };

    for _ in 0..iters {
        let labels = assign(&centers);
        let mut sums = vec![[0.0; 5]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let px = pixel(p);
            for (acc, v) in sums[l].iter_mut().zip(px) {
                *acc += v;
            }
            counts[l] += 1;
        }
        for ((c, sum), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = sum.map(|v| v / n as f64);
            }
        }
    }
    let raw = LabelMap::new(h, w, assign(&centers))?;
    Ok(enforce_connectivity(&raw, min_region_frac))
}
