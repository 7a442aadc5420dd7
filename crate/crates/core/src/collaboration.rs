//! Analyst-side alignment of per-institution intermediates.
//!
//! All institutions applied their own maps to the same anchor rows, so their
//! anchor intermediates are different parameterizations of one underlying
//! object. The analyst picks a common target `U` (the top left singular
//! subspace of the concatenated anchor intermediates) and fits one small
//! map `G_i` per institution with `X_anc_i G_i ~= U`, by total least
//! squares (default) or ordinary least squares. Data intermediates pushed
//! through `G_i` then live in one comparable collaboration space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hcat, numerical_rank, sign_normalize_columns, vcat, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Tls,
    Ls,
}

/// The fitted collaboration space.
#[derive(Debug, Clone)]
pub struct CollaborationSpace {
    /// Orthonormal target, `r x m_hat`.
    pub target: Matrix,
    /// Per-institution maps `G_i`, each `m_tilde_i x m_hat`.
    pub maps: Vec<Matrix>,
    pub m_hat: usize,
    /// Requested solver.
    pub solver: SolverKind,
    /// Solver actually used per institution (TLS may fall back to LS when
    /// its trailing block is numerically singular).
    pub solver_used: Vec<SolverKind>,
    /// `||X_anc_i G_i - U||_F / ||U||_F` per institution.
    pub alignment_residuals: Vec<f64>,
}

impl CollaborationSpace {
    pub fn fell_back(&self) -> bool {
        self.solver == SolverKind::Tls && self.solver_used.contains(&SolverKind::Ls)
    }
}

/// Common target: left singular vectors of `[X_anc_1, ..., X_anc_c]` for the
/// `min_i m_tilde_i` largest singular values, sign-normalized.
pub fn target_subspace(anchor_intermediates: &[Matrix]) -> Result<(Matrix, usize)> {
    if anchor_intermediates.is_empty() {
        return Err(Error::invalid("no anchor intermediates"));
    }
    let r = anchor_intermediates[0].nrows();
    let m_hat = anchor_intermediates
        .iter()
        .map(Matrix::ncols)
        .min()
        .expect("nonempty");
    if m_hat == 0 {
        return Err(Error::invalid(
            "an institution has zero-width intermediates",
        ));
    }
    let total: usize = anchor_intermediates.iter().map(Matrix::ncols).sum();
    if r <= total {
        log::warn!(
            "anchor rows ({r}) do not exceed total intermediate width ({total}); \
             alignment may be underdetermined"
        );
    }
    let z = hcat(anchor_intermediates)?;
    let svd = z.svd(true, false);
    let achievable = numerical_rank(svd.singular_values.as_slice(), 1e-10);
    if achievable < m_hat {
        return Err(Error::RankDeficient {
            requested: m_hat,
            achievable,
        });
    }
    let mut u = svd
        .u
        .expect("requested left singular vectors")
        .columns(0, m_hat)
        .into_owned();
    sign_normalize_columns(&mut u);
    Ok((u, m_hat))
}

/// Ordinary least squares `min ||A G - B||_F` via the pseudoinverse.
pub fn solve_ls(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid(format!(
            "row mismatch: A has {}, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = a.clone().svd(true, true);
    let rank = numerical_rank(svd.singular_values.as_slice(), 1e-12);
    if rank < a.ncols() {
        log::debug!("LS design has rank {rank} < {} columns", a.ncols());
    }
    let u = svd.u.as_ref().expect("u");
    let v_t = svd.v_t.as_ref().expect("v_t");
    // G = V S^+ U' B, restricted to the numerically nonzero spectrum.
    let ub = u.columns(0, rank).transpose() * b;
    let mut scaled = ub;
    for k in 0..rank {
        let s = svd.singular_values[k];
        for col in 0..scaled.ncols() {
            scaled[(k, col)] /= s;
        }
    }
    Ok(v_t.rows(0, rank).transpose() * scaled)
}

/// Result of a total least squares solve.
#[derive(Debug, Clone)]
pub struct TlsSolution {
    pub g: Matrix,
    /// Solver that actually produced `g`.
    pub solver_used: SolverKind,
}

/// Total least squares: `min ||[E F]||_F` subject to `(A + E) G = B + F`.
///
/// From the SVD of `[A B]`, partition the right singular vectors so the
/// block of the `q` smallest singular values is `[V12; V22]`; then
/// `G = -V12 V22^{-1}`. A numerically singular `V22` (condition above 1e12)
/// falls back to ordinary least squares, and the fallback is recorded.
pub fn solve_tls(a: &Matrix, b: &Matrix) -> Result<TlsSolution> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid(format!(
            "row mismatch: A has {}, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (r, p) = a.shape();
    let q = b.ncols();
    if r < p + q {
        log::warn!("TLS with {r} rows for {p}+{q} unknown directions is underdetermined");
    }
    let mut c = hcat(&[a.clone(), b.clone()])?;
    if c.nrows() < p + q {
        // zero-padding rows leaves C'C, hence V, unchanged and makes the
        // thin SVD return the full right factor
        let mut padded = Matrix::zeros(p + q, p + q);
        padded.view_mut((0, 0), (c.nrows(), p + q)).copy_from(&c);
        c = padded;
    }
    let svd = c.svd(false, true);
    let v = svd.v_t.expect("right singular vectors").transpose();
    let v12 = v.view((0, p), (p, q)).into_owned();
    let v22 = v.view((p, p), (q, q)).into_owned();

    let v22_svd = v22.clone().svd(false, false);
    let smax = v22_svd.singular_values.max();
    let smin = v22_svd.singular_values.min();
    if smin <= 0.0 || smax / smin > 1e12 {
        log::warn!("TLS trailing block is numerically singular; falling back to LS");
        return Ok(TlsSolution {
            g: solve_ls(a, b)?,
            solver_used: SolverKind::Ls,
        });
    }
    let v22_inv = v22.try_inverse().ok_or_else(|| {
        Error::Numerical("V22 inversion failed despite conditioning check".into())
    })?;
    Ok(TlsSolution {
        g: -(v12 * v22_inv),
        solver_used: SolverKind::Tls,
    })
}

/// Fit the collaboration space and map the data intermediates into it.
/// Returns the space and the stacked representation, institution-ordered.
pub fn build_collaboration(
    anchor_intermediates: &[Matrix],
    data_intermediates: &[Matrix],
    solver: SolverKind,
) -> Result<(CollaborationSpace, Matrix)> {
    if anchor_intermediates.len() != data_intermediates.len() {
        return Err(Error::invalid(format!(
            "{} anchor vs {} data intermediate groups",
            anchor_intermediates.len(),
            data_intermediates.len()
        )));
    }
    for (i, (anc, dat)) in anchor_intermediates
        .iter()
        .zip(data_intermediates)
        .enumerate()
    {
        if anc.ncols() != dat.ncols() {
            return Err(Error::invalid(format!(
                "institution {i}: anchor intermediates have {} columns, data {}",
                anc.ncols(),
                dat.ncols()
            )));
        }
    }

    let (target, m_hat) = target_subspace(anchor_intermediates)?;
    let mut maps = Vec::with_capacity(anchor_intermediates.len());
    let mut solver_used = Vec::with_capacity(anchor_intermediates.len());
    let mut residuals = Vec::with_capacity(anchor_intermediates.len());
    for anc in anchor_intermediates {
        let (g, used) = match solver {
            SolverKind::Ls => (solve_ls(anc, &target)?, SolverKind::Ls),
            SolverKind::Tls => {
                let sol = solve_tls(anc, &target)?;
                (sol.g, sol.solver_used)
            }
        };
        let residual = (anc * &g - &target).norm() / target.norm();
        maps.push(g);
        solver_used.push(used);
        residuals.push(residual);
    }

    let mapped: Vec<Matrix> = data_intermediates
        .iter()
        .zip(&maps)
        .map(|(x, g)| x * g)
        .collect();
    let stacked = vcat(&mapped)?;

    Ok((
        CollaborationSpace {
            target,
            maps,
            m_hat,
            solver,
            solver_used,
            alignment_residuals: residuals,
        },
        stacked,
    ))
}
