//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Horizontal concatenation `[A_1, A_2, ...]`; all blocks must share row count.
pub fn hcat(blocks: &[Matrix]) -> Result<Matrix> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::invalid("hcat of empty block list"))?;
    let rows = first.nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for (k, b) in blocks.iter().enumerate() {
        if b.nrows() != rows {
            return Err(Error::invalid(format!(
                "hcat block {k} has {} rows, expected {rows}",
                b.nrows()
            )));
        }
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    Ok(out)
}

/// Vertical concatenation; all blocks must share column count.
pub fn vcat(blocks: &[Matrix]) -> Result<Matrix> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::invalid("vcat of empty block list"))?;
    let cols = first.ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for (k, b) in blocks.iter().enumerate() {
        if b.ncols() != cols {
            return Err(Error::invalid(format!(
                "vcat block {k} has {} cols, expected {cols}",
                b.ncols()
            )));
        }
        out.view_mut((at, 0), (b.nrows(), cols)).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

pub fn column_means(x: &Matrix) -> Vector {
    let n = x.nrows().max(1) as f64;
    Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtract per-column means; returns the centered matrix and the means.
pub fn center_columns(x: &Matrix) -> (Matrix, Vector) {
    let means = column_means(x);
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= means[j];
        }
    }
    (xc, means)
}

/// Flip each column so its largest-magnitude entry is positive. Ties go to
/// the lowest row index, which keeps the convention deterministic.
pub fn sign_normalize_columns(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let mut pivot = 0.0f64;
        for &v in col.iter() {
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Count singular values above `rel_tol` times the largest one.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let max = singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s > rel_tol * max)
        .count()
}

/// Squared Euclidean distance between rows `a` and `b`.
pub fn row_sq_dist(x: &Matrix, a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for j in 0..x.ncols() {
        let d = x[(a, j)] - x[(b, j)];
        acc += d * d;
    }
    acc
}

/// True if every entry is finite.
pub fn all_finite(x: &Matrix) -> bool {
    x.iter().all(|v| v.is_finite())
}
