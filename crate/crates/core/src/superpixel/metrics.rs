use std::collections::HashMap;

use crate::error::{Error, Result};

use super::LabelMap;

/// Achievable segmentation accuracy: the fraction of pixels that keep their
/// ground-truth segment when every superpixel takes its best-overlapping one.
pub fn asa(labels: &LabelMap, gt: &LabelMap) -> Result<f64> {
    if (labels.height(), labels.width()) != (gt.height(), gt.width()) {
        return Err(Error::Shape {
            op: "asa",
            left: (labels.height(), labels.width()),
            right: (gt.height(), gt.width()),
        });
    }
    let mut overlap: HashMap<(usize, usize), usize> = HashMap::new();
    for (&s, &g) in labels.labels().iter().zip(gt.labels()) {
        *overlap.entry((s, g)).or_insert(0) += 1;
    }
    let mut best: HashMap<usize, usize> = HashMap::new();
    for ((s, _), count) in overlap {
        let b = best.entry(s).or_insert(0);
        *b = (*b).max(count);
    }
    Ok(best.values().sum::<usize>() as f64 / labels.len() as f64)
}

/// Area and perimeter of every label; the perimeter counts pixel edges that
/// face another label or the image border.
pub fn areas_and_perimeters(labels: &LabelMap) -> HashMap<usize, (usize, usize)> {
    let (h, w) = (labels.height(), labels.width());
    let mut stats: HashMap<usize, (usize, usize)> = HashMap::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(y, x);
            let differs = |ny: isize, nx: isize| {
                ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize || labels.get(ny as usize, nx as usize) != l
            };
            let (yi, xi) = (y as isize, x as isize);
            let edges = [(yi - 1, xi), (yi + 1, xi), (yi, xi - 1), (yi, xi + 1)]
                .into_iter()
                .filter(|&(a, b)| differs(a, b))
                .count();
            let e = stats.entry(l).or_insert((0, 0));
            e.0 += 1;
            e.1 += edges;
        }
    }
    stats
}

/// Area-weighted isoperimetric quotient `Σ (|S|/HW)·min(1, 4π|S|/P(S)²)`.
pub fn compactness(labels: &LabelMap) -> f64 {
    let n = labels.len() as f64;
    let mut terms: Vec<(usize, f64)> = areas_and_perimeters(labels)
        .into_iter()
        .map(|(l, (a, p))| {
            let a = a as f64;
            let q = (4.0 * std::f64::consts::PI * a / (p as f64 * p as f64)).min(1.0);
            (l, a / n * q)
        })
        .collect();
    // fixed summation order keeps the value reproducible
    terms.sort_by_key(|t| t.0);
    terms.iter().map(|t| t.1).sum()
}
