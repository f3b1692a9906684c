use crate::error::{Error, Result};

use super::Matrix;

/// Dense `height × width × dim` grid of pixel embeddings.
///
/// Storage is a `(height·width) × dim` [`Matrix`] whose row `y·width + x`
/// holds the embedding of pixel `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    pixels: Matrix,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, dim: usize) -> Self {
        Self {
            height,
            width,
            pixels: Matrix::zeros(height * width, dim),
        }
    }

    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_matrix(height, width, Matrix::from_vec(height * width, dim, data)?)
    }

    pub fn from_matrix(height: usize, width: usize, pixels: Matrix) -> Result<Self> {
        if pixels.rows() != height * width {
            return Err(Error::Shape {
                op: "FeatureMap::from_matrix",
                left: (height, width),
                right: pixels.shape(),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let pixels = Matrix::from_fn(height * width, dim, |p, c| f(p / width, p % width, c));
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.pixels.cols()
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        self.pixels.row(y * self.width + x)
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        self.pixels.row_mut(y * self.width + x)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.pixels
    }

    pub fn into_matrix(self) -> Matrix {
        self.pixels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let fm = FeatureMap::from_fn(3, 4, 2, |y, x, c| (y * 100 + x * 10 + c) as f64);
        assert_eq!(fm.pixel(2, 1), &[210.0, 211.0]);
        let m = fm.clone().into_matrix();
        assert_eq!(m.shape(), (12, 2));
        assert_eq!(m.row(2 * 4 + 1), &[210.0, 211.0]);
        let back = FeatureMap::from_matrix(3, 4, m).unwrap();
        assert_eq!(back, fm);
        assert!(FeatureMap::from_matrix(2, 2, Matrix::zeros(5, 1)).is_err());
    }
}
