//! Per-party intermediate-representation maps.
//!
//! Both reducers produce a [`LinearMap`]: an affine row-wise map
//! `x -> (x - mean) P` with `P` of full column rank and fewer output than
//! input dimensions. Locality preserving projections (LPP) is the default;
//! PCA is the unsupervised baseline.
//!
//! LPP builds a symmetric k-NN graph with heat-kernel weights, then solves
//! the generalized symmetric eigenproblem
//!
//! ```text
//! (Xc' L Xc) a = lambda (Xc' D Xc + eps I) a
//! ```
//!
//! keeping the eigenvectors of the smallest eigenvalues. Columns are scaled
//! to unit Euclidean norm (the convention of the widely used MATLAB LPP
//! code), which keeps the embedding's coordinate variances proportional to
//! the data variance along each direction; eigenvectors of the pencil stay
//! mutually B-orthogonal. The ridge term keeps the right-hand side positive
//! definite when blocks have fewer samples than features.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{
    center_columns, numerical_rank, row_sq_dist, sign_normalize_columns, Matrix, Vector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Lpp,
    Pca,
}

/// LPP hyperparameters. `None` means "derive from the data": the heat
/// parameter defaults to the mean squared edge distance, the ridge to
/// `1e-6 * trace(Xc' D Xc) / m`.
#[derive(Debug, Clone)]
pub struct LppConfig {
    pub knn_k: usize,
    pub heat_t: Option<f64>,
    pub ridge_eps: Option<f64>,
    /// Scale each column to unit variance before fitting (folded back into
    /// the projection, so the map still applies to raw inputs).
    pub standardize: bool,
}

impl Default for LppConfig {
    fn default() -> Self {
        Self {
            knn_k: 7,
            heat_t: None,
            ridge_eps: None,
            standardize: false,
        }
    }
}

/// Resolved LPP fit record kept alongside the projection.
#[derive(Debug, Clone)]
pub struct LppFitInfo {
    pub knn_k: usize,
    pub heat_t: f64,
    pub ridge_eps: f64,
    /// False when the k-NN graph split into several components. The
    /// Laplacian stays PSD, so the fit proceeds; the flag is for reporting.
    pub graph_connected: bool,
    /// Generalized eigenvalues of the kept directions, nondecreasing.
    pub eigenvalues: Vec<f64>,
}

/// Affine row-wise dimension reducer `x -> (x - mean) P`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub mean: Vector,
    /// `m_in x m_out`, full column rank.
    pub projection: Matrix,
    pub kind: MapKind,
    /// Present for LPP fits.
    pub fit_params: Option<LppFitInfo>,
}

impl LinearMap {
    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }
}

/// Apply a fitted map row-wise: `(X - 1 mean') P`.
pub fn apply_map(map: &LinearMap, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != map.input_dim() {
        return Err(Error::invalid(format!(
            "map expects {} columns, got {}",
            map.input_dim(),
            x.ncols()
        )));
    }
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= map.mean[j];
        }
    }
    Ok(xc * &map.projection)
}

/// The assembled LPP eigensystem for already-centered data.
pub struct LppSystem {
    /// `Xc' L Xc`.
    pub a: Matrix,
    /// `Xc' D Xc + eps I`.
    pub b: Matrix,
    pub heat_t: f64,
    pub ridge_eps: f64,
    pub graph_connected: bool,
}

/// Build the symmetric k-NN heat-kernel graph and the LPP matrix pencil
/// from centered data. Exposed so tests can check the defining equation of
/// the fit against independently assembled matrices.
pub fn lpp_system(xc: &Matrix, cfg: &LppConfig) -> Result<LppSystem> {
    let n = xc.nrows();
    let m = xc.ncols();
    if n < 2 {
        return Err(Error::invalid("LPP needs at least two samples"));
    }
    if cfg.knn_k == 0 || cfg.knn_k >= n {
        return Err(Error::invalid(format!(
            "knn_k = {} must lie in 1..{n}",
            cfg.knn_k
        )));
    }

    let mut dist2 = Matrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let d = row_sq_dist(xc, a, b);
            dist2[(a, b)] = d;
            dist2[(b, a)] = d;
        }
    }

    // Directed k-NN lists, symmetrized with OR. Candidate order breaks
    // distance ties on the lower index.
    let mut adjacent = vec![false; n * n];
    for a in 0..n {
        let mut candidates: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        candidates.sort_by(|&p, &q| {
            dist2[(a, p)]
                .partial_cmp(&dist2[(a, q)])
                .unwrap()
                .then(p.cmp(&q))
        });
        for &b in candidates.iter().take(cfg.knn_k) {
            adjacent[a * n + b] = true;
            adjacent[b * n + a] = true;
        }
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if adjacent[a * n + b] {
                edges.push((a, b));
            }
        }
    }

    let heat_t = match cfg.heat_t {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::invalid(format!("heat_t = {t} must be positive"))),
        None => {
            let mean = edges.iter().map(|&(a, b)| dist2[(a, b)]).sum::<f64>() / edges.len() as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0 // coincident points; any positive scale gives unit weights
            }
        }
    };

    let mut weights = Matrix::zeros(n, n);
    for &(a, b) in &edges {
        let w = (-dist2[(a, b)] / heat_t).exp();
        weights[(a, b)] = w;
        weights[(b, a)] = w;
    }
    let degree: Vec<f64> = (0..n).map(|a| weights.row(a).sum()).collect();

    // A = Xc' L Xc with L = D - W; B = Xc' D Xc + eps I.
    let mut laplacian = -weights;
    for a in 0..n {
        laplacian[(a, a)] += degree[a];
    }
    let a_mat = xc.transpose() * &laplacian * xc;
    let mut b_mat = Matrix::zeros(m, m);
    for (row_idx, &deg) in degree.iter().enumerate() {
        let row = xc.row(row_idx);
        for p in 0..m {
            for q in 0..m {
                b_mat[(p, q)] += deg * row[p] * row[q];
            }
        }
    }
    let ridge_eps = match cfg.ridge_eps {
        Some(e) if e >= 0.0 => e,
        Some(e) => return Err(Error::invalid(format!("ridge_eps = {e} must be >= 0"))),
        None => 1e-6 * b_mat.trace() / m as f64,
    };
    for p in 0..m {
        b_mat[(p, p)] += ridge_eps;
    }

    Ok(LppSystem {
        a: symmetrize(a_mat),
        b: symmetrize(b_mat),
        heat_t,
        ridge_eps,
        graph_connected: connected(n, &edges),
    })
}

fn symmetrize(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for &(a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        parent[ra] = rb;
    }
    let root0 = find(&mut parent, 0);
    (1..n).all(|x| find(&mut parent, x) == root0)
}

const RANK_REL_TOL: f64 = 1e-10;

/// Fit locality preserving projections to `target_dim` output dimensions.
pub fn fit_lpp(x: &Matrix, target_dim: usize, cfg: &LppConfig) -> Result<LinearMap> {
    let m = x.ncols();
    if target_dim == 0 || target_dim > m {
        return Err(Error::invalid(format!(
            "target_dim = {target_dim} must lie in 1..={m}"
        )));
    }
    let (mut xc, mean) = center_columns(x);

    let mut scales: Option<Vec<f64>> = None;
    if cfg.standardize {
        let n = xc.nrows() as f64;
        let s: Vec<f64> = (0..m)
            .map(|j| {
                let var = xc.column(j).iter().map(|v| v * v).sum::<f64>() / (n - 1.0).max(1.0);
                let sd = var.sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        for mut row in xc.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v /= s[j];
            }
        }
        scales = Some(s);
    }

    let achievable = numerical_rank(
        xc.clone().svd(false, false).singular_values.as_slice(),
        RANK_REL_TOL,
    );
    if target_dim > achievable {
        return Err(Error::RankDeficient {
            requested: target_dim,
            achievable,
        });
    }

    let system = lpp_system(&xc, cfg)?;
    if !system.graph_connected {
        log::warn!(
            "LPP k-NN graph is disconnected (k = {}); Laplacian is still PSD",
            cfg.knn_k
        );
    }

    // Reduce to standard form with the Cholesky factor of B, solve, and map
    // the eigenvectors back.
    let chol = nalgebra::Cholesky::new(system.b.clone()).ok_or_else(|| {
        Error::Numerical("LPP moment matrix is not positive definite; increase ridge_eps".into())
    })?;
    let l = chol.l();
    let s = l
        .solve_lower_triangular(&system.a)
        .ok_or_else(|| Error::Numerical("triangular solve failed in LPP reduction".into()))?;
    let c = l
        .solve_lower_triangular(&s.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed in LPP reduction".into()))?;
    let eig = SymmetricEigen::new(symmetrize(c));

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].partial_cmp(&eig.eigenvalues[q]).unwrap());
    let kept = &order[..target_dim];

    let lt = l.transpose();
    let mut projection = Matrix::zeros(m, target_dim);
    let mut eigenvalues = Vec::with_capacity(target_dim);
    for (col, &idx) in kept.iter().enumerate() {
        let y = eig.eigenvectors.column(idx).into_owned();
        let a = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Numerical("back-substitution failed in LPP".into()))?;
        // unit-norm columns preserve per-direction data variance in the
        // embedding; B-normalizing instead would whiten every output
        // coordinate and erase the scale information the kernel model needs
        let a = a.normalize();
        projection.set_column(col, &a);
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }
    sign_normalize_columns(&mut projection);

    // fold the per-feature scaling into the projection so the map applies
    // to raw (unscaled) inputs
    if let Some(s) = scales {
        for p in 0..m {
            for q in 0..target_dim {
                projection[(p, q)] /= s[p];
            }
        }
    }

    let sv = projection.clone().svd(false, false).singular_values;
    if numerical_rank(sv.as_slice(), 1e-8) < target_dim {
        return Err(Error::Numerical(
            "LPP projection lost full column rank; increase ridge_eps".into(),
        ));
    }

    Ok(LinearMap {
        mean,
        projection,
        kind: MapKind::Lpp,
        fit_params: Some(LppFitInfo {
            knn_k: cfg.knn_k,
            heat_t: system.heat_t,
            ridge_eps: system.ridge_eps,
            graph_connected: system.graph_connected,
            eigenvalues,
        }),
    })
}

/// Fit PCA: the top right singular vectors of the centered data.
pub fn fit_pca(x: &Matrix, target_dim: usize) -> Result<LinearMap> {
    let m = x.ncols();
    let limit = x.nrows().min(m);
    if target_dim == 0 || target_dim > limit {
        return Err(Error::invalid(format!(
            "target_dim = {target_dim} must lie in 1..={limit}"
        )));
    }
    let (xc, mean) = center_columns(x);
    let svd = xc.svd(false, true);
    let achievable = numerical_rank(svd.singular_values.as_slice(), RANK_REL_TOL);
    if target_dim > achievable {
        return Err(Error::RankDeficient {
            requested: target_dim,
            achievable,
        });
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut projection = v_t.rows(0, target_dim).transpose();
    sign_normalize_columns(&mut projection);

    Ok(LinearMap {
        mean,
        projection,
        kind: MapKind::Pca,
        fit_params: None,
    })
}
