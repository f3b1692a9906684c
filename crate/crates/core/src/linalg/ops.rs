use crate::error::{Error, Result};

use super::Matrix;

/// Tolerance of the softmax normalisation law checked in debug builds.
pub const SOFTMAX_SUM_TOL: f64 = 1e-12;

/// Which slices of a matrix a softmax normalises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Each row sums to one.
    Rows,
    /// Each column sums to one.
    Cols,
}

/// Max-subtracted softmax applied independently to every row or every column.
pub fn softmax_axis(m: &Matrix, axis: Axis) -> Matrix {
    let mut out = m.clone();
    let (rows, cols) = m.shape();
    match axis {
        Axis::Rows => {
            for r in 0..rows {
                softmax_in_place(out.row_mut(r));
            }
        }
        Axis::Cols => {
            if rows == 0 {
                return out;
            }
            let data = out.as_mut_slice();
            let mut max = data[..cols].to_vec();
            for r in 1..rows {
                for (mx, &v) in max.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
                    if v > *mx {
                        *mx = v;
                    }
                }
            }
            let mut sum = vec![0.0; cols];
            for r in 0..rows {
                let row = &mut data[r * cols..(r + 1) * cols];
                for ((v, mx), s) in row.iter_mut().zip(&max).zip(sum.iter_mut()) {
                    *v = (*v - mx).exp();
                    *s += *v;
                }
            }
            for r in 0..rows {
                let row = &mut data[r * cols..(r + 1) * cols];
                for (v, s) in row.iter_mut().zip(&sum) {
                    *v /= s;
                }
            }
        }
    }
    debug_assert!(
        softmax_law_holds(&out, axis, SOFTMAX_SUM_TOL),
        "softmax slices must sum to 1"
    );
    out
}

/// Softmax of one contiguous slice.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Largest deviation from one over all slice sums along `axis`.
pub fn softmax_law_error(m: &Matrix, axis: Axis) -> f64 {
    match axis {
        Axis::Rows => m
            .iter_rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max),
        Axis::Cols => m
            .column_sums()
            .into_iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max),
    }
}

pub fn softmax_law_holds(m: &Matrix, axis: Axis, tol: f64) -> bool {
    let nonneg = m.as_slice().iter().all(|&v| v >= 0.0);
    nonneg && softmax_law_error(m, axis) <= tol
}

/// Coordinate-wise mean of equal-length vectors.
pub fn avg_pool<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyPool)?.as_ref();
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for (i, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Shape {
                op: "avg_pool",
                left: (i, v.len()),
                right: (0, dim),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_give_uniform_columns() {
        let s = softmax_axis(&Matrix::zeros(2, 2), Axis::Cols);
        assert_eq!(s.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_class_is_one() {
        let s = softmax_axis(&Matrix::from_vec(1, 1, vec![-3.7]).unwrap(), Axis::Rows);
        assert_eq!(s.as_slice(), &[1.0]);
        let s = softmax_axis(&Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap(), Axis::Cols);
        assert_eq!(s.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn closed_form_column() {
        let m = Matrix::from_vec(2, 1, vec![0.0, 3f64.ln()]).unwrap();
        let s = softmax_axis(&m, Axis::Cols);
        assert!((s[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((s[(1, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pooling() {
        assert_eq!(avg_pool(&[vec![1.5, -2.0]]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(avg_pool(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(
            avg_pool(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(),
            vec![3.0, 4.0]
        );
        let empty: [Vec<f64>; 0] = [];
        assert!(matches!(avg_pool(&empty), Err(Error::EmptyPool)));
        assert!(matches!(avg_pool(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Shape { .. })));
    }

    fn small_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-30.0f64..30.0, r * c)
                .prop_map(move |d| Matrix::from_vec(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn slices_sum_to_one(m in small_matrix(), by_cols in any::<bool>()) {
            let axis = if by_cols { Axis::Cols } else { Axis::Rows };
            let s = softmax_axis(&m, axis);
            prop_assert!(softmax_law_error(&s, axis) <= 1e-12);
            prop_assert!(s.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn shift_invariance(m in small_matrix(), shift in -100.0f64..100.0) {
            let shifted = Matrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)] + shift);
            for axis in [Axis::Rows, Axis::Cols] {
                let a = softmax_axis(&m, axis);
                let b = softmax_axis(&shifted, axis);
                prop_assert!(a.max_abs_diff(&b) <= 1e-12);
            }
        }

        #[test]
        fn matmul_is_associative(
            (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(p, q, r, s)| (
                proptest::collection::vec(-2.0f64..2.0, p * q).prop_map(move |d| Matrix::from_vec(p, q, d).unwrap()),
                proptest::collection::vec(-2.0f64..2.0, q * r).prop_map(move |d| Matrix::from_vec(q, r, d).unwrap()),
                proptest::collection::vec(-2.0f64..2.0, r * s).prop_map(move |d| Matrix::from_vec(r, s, d).unwrap()),
            ))
        ) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.frobenius_norm().max(1.0);
            prop_assert!(left.max_abs_diff(&right) / scale <= 1e-9);
        }
    }
}
