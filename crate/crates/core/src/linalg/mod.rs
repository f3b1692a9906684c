//! Dense-matrix substrate used by the clustering and attention code.
//!
//! Everything is `f64` and row-major; pixel `(y, x)` of a `W`-wide map lives
//! in row `y·W + x`.

mod feature_map;
mod grid;
mod matrix;
mod ops;
mod position;

pub use feature_map::FeatureMap;
pub use grid::{grid_coords, grid_sample, GridSample};
pub use matrix::{axpy, dot, matmul, Matrix};
pub use ops::{
    avg_pool, softmax_axis, softmax_in_place, softmax_law_error, softmax_law_holds, Axis,
    SOFTMAX_SUM_TOL,
};
pub use position::{position_embed, position_table};
