//! Small dense helpers shared by the geometry and pricing code.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn sigma_min(a: &Matrix) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

pub fn sigma_max(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Spectral norm.
pub fn norm2(a: &Matrix) -> f64 {
    sigma_max(a)
}

/// Condition number `sigma_max / sigma_min` over the `min(m, n)` singular values.
/// Infinite for rank-deficient input.
pub fn condition_number(a: &Matrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Matrix {
    let m = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    Matrix::from_fn(m, d, |i, j| rows[i][j])
}

pub fn dist(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm()
}
