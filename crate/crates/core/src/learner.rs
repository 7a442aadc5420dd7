//! Gaussian-kernel ridge regression on the collaboration representation.
//!
//! The analyst model is `h(x) = k(x, support) alpha` with
//! `k(x, y) = exp(-gamma ||x - y||^2)` and dual coefficients solving
//! `(K + lambda I) alpha = Y` against one-hot ground truth. Class scores are
//! turned into labels by row argmax, ties to the lowest class index.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::GroundTruthMatrix;
use crate::error::{Error, Result};
use crate::linalg::{row_sq_dist, Matrix};

/// Fitted kernel ridge model.
#[derive(Debug, Clone)]
pub struct KrrModel {
    /// Training inputs in the collaboration space, `n x m_hat`.
    pub support: Matrix,
    /// Dual coefficients, `n x class_count`.
    pub alpha: Matrix,
    pub lambda: f64,
    pub gamma: f64,
    pub class_count: usize,
}

/// Median heuristic for the kernel inverse-width: `1 / median(||x_a-x_b||^2)`
/// over all pairs of (at most `sample_cap`, seeded subsample) rows.
pub fn median_gamma(x: &Matrix, sample_cap: usize) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("median heuristic needs at least two rows"));
    }
    let cap = sample_cap.max(2).min(n);
    let rows: Vec<usize> = if cap < n {
        let mut idx: Vec<usize> = (0..n).collect();
        // fixed internal seed: the heuristic is part of the deterministic fit
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d65_6469_616e);
        idx.shuffle(&mut rng);
        idx.truncate(cap);
        idx
    } else {
        (0..n).collect()
    };

    let mut d2: Vec<f64> = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &ia) in rows.iter().enumerate() {
        for &ib in rows.iter().skip(a + 1) {
            d2.push(row_sq_dist(x, ia, ib));
        }
    }
    d2.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mid = d2.len() / 2;
    let median = if d2.len() % 2 == 1 {
        d2[mid]
    } else {
        0.5 * (d2[mid - 1] + d2[mid])
    };
    if median <= 0.0 {
        return Err(Error::Numerical(
            "median pairwise distance is zero (duplicate rows); pass an explicit gamma".into(),
        ));
    }
    Ok(1.0 / median)
}

fn gram(x: &Matrix, gamma: f64) -> Matrix {
    let n = x.nrows();
    let mut k = Matrix::zeros(n, n);
    for a in 0..n {
        k[(a, a)] = 1.0;
        for b in (a + 1)..n {
            let v = (-gamma * row_sq_dist(x, a, b)).exp();
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Cross-kernel between query rows and support rows.
fn cross_kernel(query: &Matrix, support: &Matrix, gamma: f64) -> Matrix {
    let mut k = Matrix::zeros(query.nrows(), support.nrows());
    for a in 0..query.nrows() {
        for b in 0..support.nrows() {
            let mut d = 0.0;
            for j in 0..query.ncols() {
                let t = query[(a, j)] - support[(b, j)];
                d += t * t;
            }
            k[(a, b)] = (-gamma * d).exp();
        }
    }
    k
}

/// Fit by a symmetric positive-definite factorization of `K + lambda I`,
/// with one step of iterative refinement to tighten the residual.
pub fn fit_krr(x: &Matrix, y: &GroundTruthMatrix, lambda: f64, gamma: f64) -> Result<KrrModel> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if y.matrix().nrows() != x.nrows() {
        return Err(Error::invalid(format!(
            "{} rows of Y for {} training rows",
            y.matrix().nrows(),
            x.nrows()
        )));
    }
    if gamma <= 0.0 {
        return Err(Error::invalid("gamma must be positive"));
    }
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be >= 0"));
    }

    let mut system = gram(x, gamma);
    for a in 0..x.nrows() {
        system[(a, a)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(system.clone()).ok_or_else(|| {
        Error::Numerical("kernel system is not positive definite; increase lambda above 0".into())
    })?;
    let mut alpha = chol.solve(y.matrix());
    let residual = y.matrix() - &system * &alpha;
    alpha += chol.solve(&residual);

    Ok(KrrModel {
        support: x.clone(),
        alpha,
        lambda,
        gamma,
        class_count: y.matrix().ncols(),
    })
}

/// Class scores for query rows: `K_cross alpha`, shape `k x class_count`.
pub fn predict_krr(model: &KrrModel, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != model.support.ncols() {
        return Err(Error::invalid(format!(
            "model expects {} columns, got {}",
            model.support.ncols(),
            x.ncols()
        )));
    }
    Ok(cross_kernel(x, &model.support, model.gamma) * &model.alpha)
}

/// Row argmax with ties to the lowest class index.
pub fn argmax_labels(scores: &Matrix) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let row = scores.row(i);
            let mut best = 0;
            for j in 1..row.ncols() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::one_hot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn median_gamma_single_pair() {
        let x = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!((median_gamma(&x, 100).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_gamma_scales_inversely_with_squared_scale() {
        let x = random_matrix(30, 3, 1);
        let g1 = median_gamma(&x, 100).unwrap();
        let g2 = median_gamma(&(&x * 2.0), 100).unwrap();
        assert!((g2 * 4.0 - g1).abs() < 1e-10 * g1);
    }

    #[test]
    fn median_gamma_subsample_close_to_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let x = Matrix::from_fn(100, 8, |_, _| {
            rand_distr::Distribution::sample(&normal, &mut rng)
        });
        // oracle: all pairs
        let mut d2 = Vec::new();
        for a in 0..100 {
            for b in (a + 1)..100 {
                d2.push(row_sq_dist(&x, a, b));
            }
        }
        d2.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let median = 0.5 * (d2[d2.len() / 2 - 1] + d2[d2.len() / 2]);
        let oracle = 1.0 / median;
        let capped = median_gamma(&x, 64).unwrap();
        assert!(
            (capped - oracle).abs() <= 0.2 * oracle,
            "capped {capped} vs oracle {oracle}"
        );
        let full = median_gamma(&x, 1000).unwrap();
        assert!((full - oracle).abs() < 1e-12);
    }

    #[test]
    fn median_gamma_rejects_identical_rows() {
        let x = Matrix::zeros(5, 2);
        assert!(median_gamma(&x, 10).is_err());
    }

    #[test]
    fn single_point_closed_form() {
        let x = Matrix::from_row_slice(1, 1, &[0.3]);
        let y = one_hot(&[0], 2).unwrap();
        let model = fit_krr(&x, &y, 0.01, 1.0).unwrap();
        let scores = predict_krr(&model, &x).unwrap();
        // k(x,x) = 1 so alpha = 1/(1+lambda) and the prediction is the same
        assert!((scores[(0, 0)] - 1.0 / 1.01).abs() < 1e-10);
        assert!((scores[(0, 0)] - 0.990099).abs() < 1e-6);
    }

    #[test]
    fn near_interpolation_at_tiny_lambda() {
        // well-separated points keep the Gram matrix well-conditioned
        let n = 24;
        let x = Matrix::from_fn(n, 2, |i, j| {
            let row = (i / 6) as f64;
            let col = (i % 6) as f64;
            if j == 0 {
                col * 2.0
            } else {
                row * 2.0
            }
        });
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let y = one_hot(&labels, 3).unwrap();
        let gamma = median_gamma(&x, 100).unwrap();
        let model = fit_krr(&x, &y, 1e-12, gamma).unwrap();

        let scores = predict_krr(&model, &x).unwrap();
        let max_err = (scores - y.matrix()).abs().max();
        assert!(max_err < 1e-6, "interpolation error {max_err}");
        assert_eq!(argmax_labels(&predict_krr(&model, &x).unwrap()), labels);
    }

    #[test]
    fn dual_system_residual_is_tight() {
        let x = random_matrix(50, 4, 3);
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let y = one_hot(&labels, 2).unwrap();
        let model = fit_krr(&x, &y, 0.01, 2.0).unwrap();
        let mut system = gram(&x, 2.0);
        for a in 0..50 {
            system[(a, a)] += 0.01;
        }
        let rel = (system * &model.alpha - y.matrix()).norm() / y.matrix().norm();
        assert!(rel < 1e-8, "dual residual {rel}");
    }

    #[test]
    fn far_query_scores_decay_to_zero() {
        let x = random_matrix(10, 3, 4);
        let y = one_hot(&(0..10).map(|i| i % 2).collect::<Vec<_>>(), 2).unwrap();
        let model = fit_krr(&x, &y, 0.01, 1.0).unwrap();
        let far = Matrix::from_row_slice(1, 3, &[1e4, -1e4, 1e4]);
        let scores = predict_krr(&model, &far).unwrap();
        assert!(scores.abs().max() < 1e-100);
    }

    #[test]
    fn predictions_invariant_under_row_permutation() {
        let x = random_matrix(30, 3, 5);
        let labels: Vec<usize> = (0..30).map(|i| (i * 7) % 2).collect();
        let y = one_hot(&labels, 2).unwrap();
        let query = random_matrix(8, 3, 6);

        let m1 = fit_krr(&x, &y, 0.01, 1.5).unwrap();
        let s1 = predict_krr(&m1, &query).unwrap();

        let mut perm: Vec<usize> = (0..30).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in (1..perm.len()).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        let xp = Matrix::from_fn(30, 3, |i, j| x[(perm[i], j)]);
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let m2 = fit_krr(&xp, &one_hot(&lp, 2).unwrap(), 0.01, 1.5).unwrap();
        let s2 = predict_krr(&m2, &query).unwrap();
        assert!((s1 - s2).abs().max() < 1e-10);
    }

    #[test]
    fn training_residual_nondecreasing_in_lambda() {
        let x = random_matrix(40, 3, 8);
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let y = one_hot(&labels, 2).unwrap();
        let mut last = -1.0;
        for &lambda in &[1e-6, 1e-2, 1.0] {
            let model = fit_krr(&x, &y, lambda, 1.0).unwrap();
            let residual = (predict_krr(&model, &x).unwrap() - y.matrix()).norm();
            assert!(
                residual >= last - 1e-10,
                "residual not monotone at {lambda}"
            );
            last = residual;
        }
    }

    #[test]
    fn gram_has_unit_diagonal_and_bounded_entries() {
        let x = random_matrix(15, 4, 9);
        let k = gram(&x, 0.7);
        for a in 0..15 {
            assert_eq!(k[(a, a)], 1.0);
            for b in 0..15 {
                assert!(k[(a, b)] > 0.0 && k[(a, b)] <= 1.0);
                assert_eq!(k[(a, b)], k[(b, a)]);
            }
        }
    }

    #[test]
    fn argmax_tie_breaks_low_index() {
        let scores = Matrix::from_row_slice(2, 3, &[0.5, 0.5, 0.1, 0.2, 0.9, 0.9]);
        assert_eq!(argmax_labels(&scores), vec![0, 1]);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let x = random_matrix(5, 3, 10);
        let y = one_hot(&[0, 1, 0, 1, 0], 2).unwrap();
        let model = fit_krr(&x, &y, 0.01, 1.0).unwrap();
        assert!(predict_krr(&model, &Matrix::zeros(2, 4)).is_err());
    }
}
