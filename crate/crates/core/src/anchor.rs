//! Shareable anchor data.
//!
//! Every party generates an anchor block from (at most) its own private
//! block, shares it with all users, and the blocks are assembled into one
//! `r x m` matrix covering the full feature space. The anchor is the only
//! full-width matrix that ever circulates; it is synthetic by construction.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::PartitionedDataset;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, center_columns, numerical_rank, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMethod {
    /// Entries i.i.d. uniform within per-feature ranges.
    UniformRandom,
    /// Bootstrap resampling projected onto a low-rank SVD subspace with
    /// per-feature Gaussian perturbation.
    SvdPerturb,
}

/// The assembled anchor matrix plus enough structure to slice it per party.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    /// `r x m`, column boundaries matching the data partition.
    pub x_anc: Matrix,
    /// Cumulative feature boundaries, length `d + 1`.
    pub col_offsets: Vec<usize>,
    /// Originating institution of each anchor row.
    pub row_provenance: Vec<usize>,
    pub method: AnchorMethod,
    /// Optional second anchor reserved for distillation; same width.
    pub interp_anc: Option<Matrix>,
}

impl AnchorSet {
    pub fn rows(&self) -> usize {
        self.x_anc.nrows()
    }

    /// Feature slice `X_anc[:, j]` for vertical party `j`.
    pub fn column_block(&self, j: usize) -> Matrix {
        self.slice_cols(&self.x_anc, j)
    }

    /// Feature slice of the interpretation anchor, when present.
    pub fn interp_column_block(&self, j: usize) -> Option<Matrix> {
        self.interp_anc.as_ref().map(|m| self.slice_cols(m, j))
    }

    fn slice_cols(&self, m: &Matrix, j: usize) -> Matrix {
        let lo = self.col_offsets[j];
        let hi = self.col_offsets[j + 1];
        m.columns(lo, hi - lo).into_owned()
    }
}

/// Per-party RNG stream: one shared seed, a distinct ChaCha stream per
/// `(institution, party)`, so parallel and serial generation agree.
pub fn party_rng(seed: u64, institution: usize, party: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((institution as u64) << 32) | party as u64 | 1 << 63);
    rng
}

/// Uniform random anchor block: entries i.i.d. in `[min_j, max_j]` per column.
pub fn generate_uniform_anchor(
    feature_mins: &[f64],
    feature_maxs: &[f64],
    rows: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if feature_mins.len() != feature_maxs.len() {
        return Err(Error::invalid("min/max length mismatch"));
    }
    if rows == 0 {
        return Err(Error::invalid("anchor needs at least one row"));
    }
    for (j, (&lo, &hi)) in feature_mins.iter().zip(feature_maxs).enumerate() {
        if lo > hi {
            return Err(Error::invalid(format!(
                "feature {j}: min {lo} exceeds max {hi}"
            )));
        }
    }
    let m = feature_mins.len();
    let mut out = Matrix::zeros(rows, m);
    for i in 0..rows {
        for j in 0..m {
            let (lo, hi) = (feature_mins[j], feature_maxs[j]);
            out[(i, j)] = if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            };
        }
    }
    Ok(out)
}

/// SVD-perturbation anchor block built from one private block only:
/// bootstrap-resample rows, project onto the top-`rank` right singular
/// subspace of the centered block, add Gaussian noise scaled per feature,
/// and restore the column means. `rank = None` keeps the smallest subspace
/// holding at least 95% of the squared singular-value mass.
pub fn generate_svd_anchor(
    block: &Matrix,
    rows: usize,
    rank: Option<usize>,
    noise_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if rows == 0 {
        return Err(Error::invalid("anchor needs at least one row"));
    }
    if noise_ratio < 0.0 {
        return Err(Error::invalid("noise_ratio must be >= 0"));
    }
    let (n, m) = block.shape();
    if n == 0 {
        return Err(Error::invalid("empty source block"));
    }
    let (xc, means) = center_columns(block);
    let svd = xc.clone().svd(false, true);
    let singular: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let rank = match rank {
        Some(r) => {
            if r == 0 || r > n.min(m) {
                return Err(Error::invalid(format!(
                    "rank {r} out of range 1..={}",
                    n.min(m)
                )));
            }
            r
        }
        None => {
            let total: f64 = singular.iter().map(|s| s * s).sum();
            if total == 0.0 {
                1
            } else {
                let mut acc = 0.0;
                let mut k = singular.len();
                for (idx, s) in singular.iter().enumerate() {
                    acc += s * s;
                    if acc >= 0.95 * total {
                        k = idx + 1;
                        break;
                    }
                }
                k
            }
        }
    };
    let v = svd
        .v_t
        .expect("right singular vectors")
        .rows(0, rank)
        .transpose();

    // per-feature sample std for the perturbation scale
    let stds: Vec<f64> = (0..m)
        .map(|j| {
            if n < 2 {
                return 0.0;
            }
            let var = xc.column(j).iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64;
            var.sqrt()
        })
        .collect();

    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut out = Matrix::zeros(rows, m);
    for i in 0..rows {
        let src = rng.random_range(0..n);
        let projected = xc.row(src) * &v * v.transpose();
        for j in 0..m {
            let noise = if noise_ratio > 0.0 && stds[j] > 0.0 {
                noise_ratio * stds[j] * unit.sample(rng)
            } else {
                0.0
            };
            out[(i, j)] = projected[j] + noise + means[j];
        }
    }
    Ok(out)
}

/// Assemble per-party anchor blocks into one matrix, recording provenance.
pub fn assemble_anchor(
    blocks: &[Vec<Matrix>],
    partition: &PartitionedDataset,
    method: AnchorMethod,
) -> Result<AnchorSet> {
    let widths = partition.cols_per_party();
    if blocks.is_empty() {
        return Err(Error::invalid("no anchor blocks"));
    }
    let mut total_rows = 0;
    for (i, group) in blocks.iter().enumerate() {
        if group.len() != partition.parties {
            return Err(Error::invalid(format!(
                "anchor row-group {i} has {} blocks, expected {}",
                group.len(),
                partition.parties
            )));
        }
        let r_i = group[0].nrows();
        for (j, b) in group.iter().enumerate() {
            if b.nrows() != r_i {
                return Err(Error::invalid(format!(
                    "anchor block ({i},{j}) has {} rows, row-group expects {r_i}",
                    b.nrows()
                )));
            }
            if b.ncols() != widths[j] {
                return Err(Error::invalid(format!(
                    "anchor block ({i},{j}) has {} cols, party {j} holds {}",
                    b.ncols(),
                    widths[j]
                )));
            }
            if !all_finite(b) {
                return Err(Error::invalid(format!(
                    "anchor block ({i},{j}) contains non-finite entries"
                )));
            }
        }
        total_rows += r_i;
    }

    let m = partition.m_total();
    let mut x_anc = Matrix::zeros(total_rows, m);
    let mut row_provenance = Vec::with_capacity(total_rows);
    let mut at = 0;
    for (i, group) in blocks.iter().enumerate() {
        let r_i = group[0].nrows();
        let mut col = 0;
        for b in group {
            x_anc.view_mut((at, col), (r_i, b.ncols())).copy_from(b);
            col += b.ncols();
        }
        row_provenance.extend(std::iter::repeat_n(i, r_i));
        at += r_i;
    }

    Ok(AnchorSet {
        x_anc,
        col_offsets: partition.col_offsets.clone(),
        row_provenance,
        method,
        interp_anc: None,
    })
}

/// Per-row minima/maxima of a block, the ranges the uniform generator needs.
pub fn feature_ranges(block: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let m = block.ncols();
    let mut mins = vec![f64::INFINITY; m];
    let mut maxs = vec![f64::NEG_INFINITY; m];
    for i in 0..block.nrows() {
        for j in 0..m {
            mins[j] = mins[j].min(block[(i, j)]);
            maxs[j] = maxs[j].max(block[(i, j)]);
        }
    }
    (mins, maxs)
}

/// Build the full anchor for a partition: each party generates its own
/// block from its own data only, institutions contribute `ceil(r / c)` rows
/// each (the last one takes the remainder).
pub fn build_anchor(
    partition: &PartitionedDataset,
    method: AnchorMethod,
    total_rows: usize,
    noise_ratio: f64,
    svd_rank: Option<usize>,
    seed: u64,
) -> Result<AnchorSet> {
    let c = partition.institutions;
    if total_rows == 0 {
        return Err(Error::invalid("anchor needs at least one row"));
    }
    let per = total_rows.div_ceil(c);
    if per * (c - 1) >= total_rows {
        return Err(Error::invalid(format!(
            "anchor rows {total_rows} too few for {c} institutions"
        )));
    }
    let mut blocks: Vec<Vec<Matrix>> = Vec::with_capacity(c);
    for i in 0..c {
        // each institution contributes ceil(r/c) rows, the last the remainder
        let rows_here = if i + 1 == c {
            total_rows - per * (c - 1)
        } else {
            per
        };
        let mut group = Vec::with_capacity(partition.parties);
        for j in 0..partition.parties {
            let mut rng = party_rng(seed, i, j);
            let block = &partition.blocks[i][j];
            let anc = match method {
                AnchorMethod::UniformRandom => {
                    let (mins, maxs) = feature_ranges(block);
                    generate_uniform_anchor(&mins, &maxs, rows_here, &mut rng)?
                }
                AnchorMethod::SvdPerturb => {
                    generate_svd_anchor(block, rows_here, svd_rank, noise_ratio, &mut rng)?
                }
            };
            group.push(anc);
        }
        blocks.push(group);
    }
    assemble_anchor(&blocks, partition, method)
}

/// Export the anchor matrix as CSV with a trailing provenance column, so a
/// run can be repeated against the same anchor.
pub fn export_csv(anchor: &AnchorSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Csv {
        path: path.as_ref().display().to_string(),
        message: e.to_string(),
    })?;
    let m = anchor.x_anc.ncols();
    let mut header: Vec<String> = (0..m).map(|j| format!("a{j}")).collect();
    header.push("institution".into());
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..anchor.rows() {
        let mut rec: Vec<String> = (0..m)
            .map(|j| format!("{:?}", anchor.x_anc[(i, j)]))
            .collect();
        rec.push(anchor.row_provenance[i].to_string());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Csv {
        path: "<anchor csv>".into(),
        message: e.to_string(),
    }
}

/// Import an anchor exported by [`export_csv`], validating against the
/// partition's feature boundaries.
pub fn import_csv(
    path: impl AsRef<Path>,
    partition: &PartitionedDataset,
    method: AnchorMethod,
) -> Result<AnchorSet> {
    let display = path.as_ref().display().to_string();
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| Error::Csv {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let m = partition.m_total();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut provenance: Vec<usize> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: display.clone(),
            message: e.to_string(),
        })?;
        if record.len() != m + 1 {
            return Err(Error::Csv {
                path: display,
                message: format!(
                    "line {}: {} fields, expected {}",
                    idx + 2,
                    record.len(),
                    m + 1
                ),
            });
        }
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            row.push(record[j].parse::<f64>().map_err(|_| Error::Csv {
                path: display.clone(),
                message: format!("line {}: bad number `{}`", idx + 2, &record[j]),
            })?);
        }
        provenance.push(record[m].parse::<usize>().map_err(|_| Error::Csv {
            path: display.clone(),
            message: format!("line {}: bad provenance `{}`", idx + 2, &record[m]),
        })?);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            path: display,
            message: "empty anchor file".into(),
        });
    }
    let x_anc = Matrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
    if !all_finite(&x_anc) {
        return Err(Error::invalid("anchor contains non-finite entries"));
    }
    Ok(AnchorSet {
        x_anc,
        col_offsets: partition.col_offsets.clone(),
        row_provenance: provenance,
        method,
        interp_anc: None,
    })
}

/// Sanity check used before alignment: the anchor must be tall enough to
/// overdetermine every institution's map fit.
pub fn check_overdetermined(anchor_rows: usize, max_intermediate_dim: usize) -> Result<()> {
    if anchor_rows < max_intermediate_dim {
        return Err(Error::invalid(format!(
            "anchor rows {anchor_rows} < largest intermediate dimension {max_intermediate_dim}"
        )));
    }
    Ok(())
}

/// Smallest rank capturing >= 95% of squared singular mass (exposed for
/// diagnostics and tests).
pub fn auto_rank(block: &Matrix) -> usize {
    let (xc, _) = center_columns(block);
    let sv = xc.svd(false, false).singular_values;
    let vals: Vec<f64> = sv.iter().cloned().collect();
    let total: f64 = vals.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (idx, s) in vals.iter().enumerate() {
        acc += s * s;
        if acc >= 0.95 * total {
            return idx + 1;
        }
    }
    numerical_rank(&vals, 1e-12).max(1)
}
