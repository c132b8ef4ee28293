//! Small dense-matrix helpers shared across modules.

use faer::{Col, ColRef, Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

pub fn all_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Col<f64> {
    let mut v = Col::<f64>::zeros(len);
    for i in 0..len {
        v[i] = StandardNormal.sample(rng);
    }
    v
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<f64> {
    // column-major fill order so the stream layout matches faer's storage
    let mut m = Mat::<f64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

pub fn vstack(top: MatRef<'_, f64>, bottom: MatRef<'_, f64>) -> Mat<f64> {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let n1 = top.nrows();
    Mat::from_fn(n1 + bottom.nrows(), top.ncols(), |i, j| {
        if i < n1 {
            top[(i, j)]
        } else {
            bottom[(i - n1, j)]
        }
    })
}

pub fn concat(a: ColRef<'_, f64>, b: ColRef<'_, f64>) -> Col<f64> {
    let n1 = a.nrows();
    Col::from_fn(n1 + b.nrows(), |i| if i < n1 { a[i] } else { b[i - n1] })
}

pub fn col_sq_norms(m: MatRef<'_, f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * m[(i, j)]).sum())
        .collect()
}

pub fn sq_norm(v: ColRef<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Max-entry distance between two equally sized matrices.
pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut out = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            out = out.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    out
}

/// Numerical rank from a descending list of singular values.
pub fn numerical_rank(singular_values: &[f64], rel_cutoff: f64) -> usize {
    let top = singular_values.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > rel_cutoff * top)
        .count()
}
