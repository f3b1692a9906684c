use crate::error::{Error, Result};

use super::{FeatureMap, Matrix};

// floor() guard for products like 10·sqrt(0.01) that land a hair under an integer
const FLOOR_EPS: f64 = 1e-9;

/// Seeds chosen by [`grid_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSample {
    /// `k_actual × dim` features of the seed pixels, row-major seed order.
    pub features: Matrix,
    /// `(row, col)` of every seed, strictly increasing in `row·W + col`.
    pub coords: Vec<(usize, usize)>,
    /// Grid extent as `(rows, cols)`.
    pub grid: (usize, usize),
}

impl GridSample {
    pub fn k_actual(&self) -> usize {
        self.coords.len()
    }
}

/// Cell-centre coordinates of the seed grid for `k_requested` seeds.
///
/// With `f = sqrt(k / (H·W))` the grid has `⌊W·f⌋` columns and `⌊H·f⌋` rows.
/// A side that rounds to zero is clamped to one and the other side is then
/// capped so the seed count stays at or below `k_requested`.
pub fn grid_coords(height: usize, width: usize, k_requested: usize) -> Result<Vec<(usize, usize)>> {
    let n = height * width;
    if k_requested < 1 || k_requested > n {
        return Err(Error::Range {
            what: "k_requested",
            value: k_requested,
            min: 1,
            max: n,
        });
    }
    let f = (k_requested as f64 / n as f64).sqrt();
    let mut cols = ((width as f64 * f) + FLOOR_EPS).floor() as usize;
    let mut rows = ((height as f64 * f) + FLOOR_EPS).floor() as usize;
    if cols == 0 {
        cols = 1;
        rows = rows.clamp(1, height.min(k_requested));
    }
    if rows == 0 {
        rows = 1;
        cols = cols.clamp(1, width.min(k_requested));
    }
    let cols = cols.min(width);
    let rows = rows.min(height);

    let cell_w = width as f64 / cols as f64;
    let cell_h = height as f64 / rows as f64;
    let mut coords = Vec::with_capacity(rows * cols);
    for gy in 0..rows {
        let y = ((gy as f64 + 0.5) * cell_h).floor() as usize;
        for gx in 0..cols {
            let x = ((gx as f64 + 0.5) * cell_w).floor() as usize;
            coords.push((y.min(height - 1), x.min(width - 1)));
        }
    }
    Ok(coords)
}

/// Picks the cell-centre pixels of a uniform grid and returns their features.
pub fn grid_sample(fm: &FeatureMap, k_requested: usize) -> Result<GridSample> {
    let coords = grid_coords(fm.height(), fm.width(), k_requested)?;
    let indices: Vec<usize> = coords.iter().map(|&(y, x)| y * fm.width() + x).collect();
    let rows = coords.iter().filter(|c| c.1 == coords[0].1).count();
    let cols = coords.len() / rows;
    Ok(GridSample {
        features: fm.as_matrix().select_rows(&indices),
        coords,
        grid: (rows, cols),
    })
}
