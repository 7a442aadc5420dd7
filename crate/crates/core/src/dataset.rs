//! Data model: labeled sample matrices, one-hot ground truth, CSV ingestion,
//! the synthetic benchmark generator, and the c x d block partition that the
//! collaboration protocol operates on.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};

/// A sample matrix (rows = samples) with integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub x: Matrix,
    /// Dense labels in `0..class_count`.
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub feature_names: Vec<String>,
    /// Original label spelling, indexed by dense label. Retained so reports
    /// can show the source vocabulary.
    pub label_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        x: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if class_count < 2 {
            return Err(Error::invalid("at least 2 classes required"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!(
                "label {bad} out of range 0..{class_count}"
            )));
        }
        if !all_finite(&x) {
            return Err(Error::invalid("non-finite entry in data matrix"));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::invalid("feature_names length mismatch"));
        }
        if label_names.len() != class_count {
            return Err(Error::invalid("label_names length mismatch"));
        }
        Ok(Self {
            x,
            labels,
            class_count,
            feature_names,
            label_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }
}

/// One-hot encoded ground truth: each row has a single 1 in the column of
/// its class.
#[derive(Debug, Clone)]
pub struct GroundTruthMatrix(Matrix);

impl GroundTruthMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Recover the label vector by row argmax.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.0.nrows())
            .map(|i| {
                let row = self.0.row(i);
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
}

/// Encode labels as a one-hot matrix with `class_count` columns.
pub fn one_hot(labels: &[usize], class_count: usize) -> Result<GroundTruthMatrix> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::invalid(format!(
            "label {bad} out of range 0..{class_count}"
        )));
    }
    let mut y = Matrix::zeros(labels.len(), class_count);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    Ok(GroundTruthMatrix(y))
}

/// A dataset split horizontally into `c` institutions (sample groups) and
/// vertically into `d` parties (feature groups). Block `(i, j)` is the
/// private matrix held by party `(i, j)`.
#[derive(Debug, Clone)]
pub struct PartitionedDataset {
    /// Institution count `c`.
    pub institutions: usize,
    /// Vertical party count `d`.
    pub parties: usize,
    /// `c x d` grid; block `(i, j)` is `n_i x m_j`.
    pub blocks: Vec<Vec<Matrix>>,
    /// Per-institution label vectors.
    pub row_group_labels: Vec<Vec<usize>>,
    pub class_count: usize,
    /// Cumulative row boundaries, length `c + 1`, starting at 0.
    pub row_offsets: Vec<usize>,
    /// Cumulative column boundaries, length `d + 1`, starting at 0.
    pub col_offsets: Vec<usize>,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    /// Optional test grid sharing the column boundaries (`s_i x m_j`).
    pub test_blocks: Option<Vec<Vec<Matrix>>>,
}

impl PartitionedDataset {
    pub fn n_total(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    pub fn m_total(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    /// Samples per institution.
    pub fn rows_per_institution(&self) -> Vec<usize> {
        self.row_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Features per vertical party.
    pub fn cols_per_party(&self) -> Vec<usize> {
        self.col_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Labels concatenated in institution order.
    pub fn stacked_labels(&self) -> Vec<usize> {
        self.row_group_labels.iter().flatten().copied().collect()
    }

    /// Rebuild the full matrix from the blocks. Inverse of [`partition`].
    pub fn reassemble(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n_total(), self.m_total());
        for i in 0..self.institutions {
            for j in 0..self.parties {
                let b = &self.blocks[i][j];
                out.view_mut(
                    (self.row_offsets[i], self.col_offsets[j]),
                    (b.nrows(), b.ncols()),
                )
                .copy_from(b);
            }
        }
        out
    }

    /// Split a test matrix by the given row cuts and this partition's column
    /// boundaries, producing a grid compatible with the training blocks.
    pub fn partition_test(&self, test_x: &Matrix, row_cuts: &[usize]) -> Result<Vec<Vec<Matrix>>> {
        if test_x.ncols() != self.m_total() {
            return Err(Error::invalid(format!(
                "test has {} features, partition has {}",
                test_x.ncols(),
                self.m_total()
            )));
        }
        if row_cuts.len() + 1 != self.institutions {
            return Err(Error::invalid(format!(
                "{} row cuts for {} institutions",
                row_cuts.len(),
                self.institutions
            )));
        }
        let row_offsets = offsets_from_cuts(row_cuts, test_x.nrows())?;
        let grid = (0..self.institutions)
            .map(|i| {
                (0..self.parties)
                    .map(|j| {
                        test_x
                            .view(
                                (row_offsets[i], self.col_offsets[j]),
                                (
                                    row_offsets[i + 1] - row_offsets[i],
                                    self.col_offsets[j + 1] - self.col_offsets[j],
                                ),
                            )
                            .into_owned()
                    })
                    .collect()
            })
            .collect();
        Ok(grid)
    }

    /// Attach a test grid, validating that column widths match.
    pub fn set_test_blocks(&mut self, grid: Vec<Vec<Matrix>>) -> Result<()> {
        let widths = self.cols_per_party();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != self.parties {
                return Err(Error::invalid(format!("test row group {i} is ragged")));
            }
            let s_i = row[0].nrows();
            for (j, b) in row.iter().enumerate() {
                if b.ncols() != widths[j] {
                    return Err(Error::invalid(format!(
                        "test block ({i},{j}) has {} cols, expected {}",
                        b.ncols(),
                        widths[j]
                    )));
                }
                if b.nrows() != s_i {
                    return Err(Error::invalid(format!(
                        "test block ({i},{j}) has {} rows, expected {s_i}",
                        b.nrows()
                    )));
                }
            }
        }
        self.test_blocks = Some(grid);
        Ok(())
    }
}

fn validate_cuts(cuts: &[usize], upper: usize) -> Result<()> {
    let mut prev = 0;
    for &cut in cuts {
        if cut <= prev || cut >= upper {
            return Err(Error::invalid(format!(
                "cut {cut} not strictly increasing within (0, {upper})"
            )));
        }
        prev = cut;
    }
    Ok(())
}

fn offsets_from_cuts(cuts: &[usize], upper: usize) -> Result<Vec<usize>> {
    validate_cuts(cuts, upper)?;
    let mut offsets = Vec::with_capacity(cuts.len() + 2);
    offsets.push(0);
    offsets.extend_from_slice(cuts);
    offsets.push(upper);
    Ok(offsets)
}

/// Evenly spaced row cuts splitting `n` samples into `groups` groups.
pub fn even_cuts(n: usize, groups: usize) -> Vec<usize> {
    (1..groups).map(|k| n * k / groups).collect()
}

/// Split a labeled dataset into a `(cuts_r + 1) x (cuts_c + 1)` block grid.
/// Cuts are positions, strictly increasing, exclusive of the ends.
pub fn partition(
    data: &LabeledDataset,
    row_cuts: &[usize],
    col_cuts: &[usize],
) -> Result<PartitionedDataset> {
    let row_offsets = offsets_from_cuts(row_cuts, data.n_samples())?;
    let col_offsets = offsets_from_cuts(col_cuts, data.n_features())?;
    let c = row_offsets.len() - 1;
    let d = col_offsets.len() - 1;

    let blocks = (0..c)
        .map(|i| {
            (0..d)
                .map(|j| {
                    data.x
                        .view(
                            (row_offsets[i], col_offsets[j]),
                            (
                                row_offsets[i + 1] - row_offsets[i],
                                col_offsets[j + 1] - col_offsets[j],
                            ),
                        )
                        .into_owned()
                })
                .collect()
        })
        .collect();
    let row_group_labels = (0..c)
        .map(|i| data.labels[row_offsets[i]..row_offsets[i + 1]].to_vec())
        .collect();

    Ok(PartitionedDataset {
        institutions: c,
        parties: d,
        blocks,
        row_group_labels,
        class_count: data.class_count,
        row_offsets,
        col_offsets,
        feature_names: data.feature_names.clone(),
        label_names: data.label_names.clone(),
        test_blocks: None,
    })
}

pub const ARTIFICIAL_FEATURES: usize = 20;
pub const ARTIFICIAL_TEST_SIZE: usize = 1000;

/// Two-class, 20-feature benchmark split across two institutions and two
/// vertical parties. Only features `f1` and `f11` (indices 0 and 10) carry
/// class signal; the rest are uniform noise.
///
/// Institution 1 draws its classes from Gaussian blobs centered at
/// `(+1, +1)` and `(+1, -1)` in the `(f1, f11)` plane, institution 2 from
/// `(+1, +1)` and `(-1, +1)`. So `f1` is uninformative inside institution 1
/// and `f11` inside institution 2, while the parties holding the other
/// coordinate see a clean one-feature boundary. The returned test set draws
/// from the union of the three blobs with balanced classes.
pub fn generate_artificial(
    n: usize,
    seed: u64,
    blob_std: f64,
    noise_range: f64,
) -> Result<(PartitionedDataset, LabeledDataset)> {
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::invalid(format!("n = {n} must be divisible by 4")));
    }
    if blob_std <= 0.0 {
        return Err(Error::invalid("blob_std must be positive"));
    }
    if noise_range <= 0.0 {
        return Err(Error::invalid("noise_range must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blob = Normal::new(0.0, blob_std).map_err(|e| Error::invalid(e.to_string()))?;
    let quarter = n / 4;

    // Blob centers in the (f1, f11) plane: (center, class).
    let shared = ((1.0, 1.0), 0usize);
    let inst1_blobs = [shared, ((1.0, -1.0), 1)];
    let inst2_blobs = [shared, ((-1.0, 1.0), 1)];

    let mut x = Matrix::zeros(n, ARTIFICIAL_FEATURES);
    let mut labels = vec![0usize; n];
    let mut fill_row = |rng: &mut ChaCha8Rng, row: usize, center: (f64, f64)| {
        for j in 0..ARTIFICIAL_FEATURES {
            x[(row, j)] = match j {
                0 => center.0 + blob.sample(rng),
                10 => center.1 + blob.sample(rng),
                _ => rng.random_range(-noise_range..=noise_range),
            };
        }
    };
    let mut row = 0;
    for blobs in [&inst1_blobs, &inst2_blobs] {
        for &(center, class) in blobs.iter() {
            for _ in 0..quarter {
                fill_row(&mut rng, row, center);
                labels[row] = class;
                row += 1;
            }
        }
    }

    let feature_names: Vec<String> = (1..=ARTIFICIAL_FEATURES).map(|k| format!("f{k}")).collect();
    let train = LabeledDataset::new(
        x,
        labels,
        2,
        feature_names.clone(),
        vec!["0".into(), "1".into()],
    )?;
    let partitioned = partition(&train, &[n / 2], &[10])?;

    // Test set: union of the three blobs, balanced classes. Rows are
    // grouped by institution like the training data (first half drawn from
    // institution 1's blob pair, second half from institution 2's), so
    // each institution's test slice follows its own population; the shared
    // blob supplies class 0 on both sides.
    let t = ARTIFICIAL_TEST_SIZE;
    let mut test_x = Matrix::zeros(t, ARTIFICIAL_FEATURES);
    let mut test_labels = vec![0usize; t];
    let half = t / 2;
    let mut spec: Vec<((f64, f64), usize)> = Vec::with_capacity(t);
    for blobs in [&inst1_blobs, &inst2_blobs] {
        let mut group: Vec<((f64, f64), usize)> = Vec::with_capacity(half);
        group.extend(std::iter::repeat_n(blobs[0], half / 2));
        group.extend(std::iter::repeat_n(blobs[1], half - half / 2));
        // Fisher-Yates within the institution keeps the draw reproducible.
        for i in (1..group.len()).rev() {
            let k = rng.random_range(0..=i);
            group.swap(i, k);
        }
        spec.extend(group);
    }
    for (row, &(center, class)) in spec.iter().enumerate() {
        for j in 0..ARTIFICIAL_FEATURES {
            test_x[(row, j)] = match j {
                0 => center.0 + blob.sample(&mut rng),
                10 => center.1 + blob.sample(&mut rng),
                _ => rng.random_range(-noise_range..=noise_range),
            };
        }
        test_labels[row] = class;
    }
    let test = LabeledDataset::new(
        test_x,
        test_labels,
        2,
        feature_names,
        vec!["0".into(), "1".into()],
    )?;

    Ok((partitioned, test))
}

/// Load a strict numeric CSV with a header row. The label column may hold
/// arbitrary strings; labels are densified in first-appearance order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let csv_err = |message: String| Error::Csv {
        path: display.clone(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| csv_err(format!("label column `{label_column}` not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    for (rec_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let line = rec_idx + 2; // header is line 1
        if record.len() != headers.len() {
            return Err(csv_err(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let name = cell.to_string();
                let dense = match label_names.iter().position(|l| l == &name) {
                    Some(k) => k,
                    None => {
                        label_names.push(name);
                        label_names.len() - 1
                    }
                };
                labels.push(dense);
            } else {
                let value: f64 = cell.trim().parse().map_err(|_| {
                    csv_err(format!(
                        "line {line}, column `{}`: not a number: `{cell}`",
                        headers[j]
                    ))
                })?;
                if !value.is_finite() {
                    return Err(csv_err(format!(
                        "line {line}, column `{}`: non-finite value",
                        headers[j]
                    )));
                }
                row.push(value);
            }
        }
        rows.push(row);
    }

    if label_names.len() < 2 {
        return Err(csv_err(format!(
            "found {} label class(es); at least 2 required",
            label_names.len()
        )));
    }
    let n = rows.len();
    let m = headers.len() - 1;
    let x = Matrix::from_fn(n, m, |i, j| rows[i][j]);
    LabeledDataset::new(x, labels, label_names.len(), feature_names, label_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn one_hot_identity_pattern() {
        let y = one_hot(&[0, 1], 2).unwrap();
        assert_eq!(y.matrix(), &Matrix::from_row_slice(2, 2, &[1., 0., 0., 1.]));
    }

    #[test]
    fn one_hot_repeated_class() {
        let y = one_hot(&[1, 1, 1], 2).unwrap();
        for i in 0..3 {
            assert_eq!(
                y.matrix().row(i).iter().cloned().collect::<Vec<_>>(),
                vec![0., 1.]
            );
        }
        assert_eq!(y.labels(), vec![1, 1, 1]);
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot(&[0, 2], 2).is_err());
    }

    #[test]
    fn partition_even_split() {
        let data = LabeledDataset::new(
            Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64),
            vec![0, 0, 1, 1],
            2,
            (0..4).map(|j| format!("c{j}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let part = partition(&data, &[2], &[2]).unwrap();
        assert_eq!(part.institutions, 2);
        assert_eq!(part.parties, 2);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(part.blocks[i][j].shape(), (2, 2));
            }
        }
        assert_eq!(part.blocks[1][0][(0, 0)], 8.0);
        assert_eq!(part.row_group_labels[1], vec![1, 1]);
    }

    #[test]
    fn partition_rejects_bad_cuts() {
        let data = LabeledDataset::new(
            Matrix::zeros(4, 4),
            vec![0, 0, 1, 1],
            2,
            (0..4).map(|j| format!("c{j}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(partition(&data, &[0], &[2]).is_err());
        assert!(partition(&data, &[4], &[2]).is_err());
        assert!(partition(&data, &[2, 2], &[]).is_err());
        assert!(partition(&data, &[3, 1], &[]).is_err());
    }

    #[test]
    fn artificial_shapes_match_benchmark_layout() {
        let (part, test) = generate_artificial(1600, 7, 0.3, 1.0).unwrap();
        assert_eq!(part.institutions, 2);
        assert_eq!(part.parties, 2);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(part.blocks[i][j].shape(), (800, 10));
            }
        }
        // balanced classes per institution
        for labels in &part.row_group_labels {
            assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 400);
        }
        assert_eq!(test.n_samples(), ARTIFICIAL_TEST_SIZE);
        assert_eq!(test.labels.iter().filter(|&&l| l == 0).count(), 500);
    }

    #[test]
    fn artificial_minimal_case() {
        let (part, _) = generate_artificial(4, 0, 0.3, 1.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(part.blocks[i][j].shape(), (2, 10));
            }
        }
    }

    #[test]
    fn artificial_rejects_bad_args() {
        assert!(generate_artificial(6, 0, 0.3, 1.0).is_err());
        assert!(generate_artificial(8, 0, 0.0, 1.0).is_err());
        assert!(generate_artificial(8, 0, -0.1, 1.0).is_err());
        assert!(generate_artificial(8, 0, 0.3, 0.0).is_err());
    }

    #[test]
    fn partition_credit_layout() {
        // 3000 x 6 split into four 1500 x 3 blocks
        let data = LabeledDataset::new(
            Matrix::zeros(3000, 6),
            (0..3000).map(|i| i % 2).collect(),
            2,
            (0..6).map(|j| format!("c{j}")).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let part = partition(&data, &[1500], &[3]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(part.blocks[i][j].shape(), (1500, 3));
            }
        }
    }

    #[test]
    fn artificial_is_reproducible_and_seed_sensitive() {
        let (a, ta) = generate_artificial(80, 11, 0.3, 1.0).unwrap();
        let (b, tb) = generate_artificial(80, 11, 0.3, 1.0).unwrap();
        assert_eq!(a.reassemble(), b.reassemble());
        assert_eq!(ta.x, tb.x);
        let (c, _) = generate_artificial(80, 12, 0.3, 1.0).unwrap();
        assert_ne!(a.reassemble(), c.reassemble());
        assert_eq!(c.blocks[0][0].shape(), (40, 10));
        assert_eq!(
            c.row_group_labels[0].iter().filter(|&&l| l == 0).count(),
            20
        );
    }

    /// The sign-rule oracle on the two signal features must track the blob
    /// construction almost perfectly at blob_std = 0.3.
    #[test]
    fn artificial_sign_rule_oracle() {
        let (_, test) = generate_artificial(1600, 7, 0.3, 1.0).unwrap();
        let mut hits = 0;
        for i in 0..test.n_samples() {
            let pred = if test.x[(i, 0)] > 0.0 && test.x[(i, 10)] > 0.0 {
                0
            } else {
                1
            };
            if pred == test.labels[i] {
                hits += 1;
            }
        }
        let acc = hits as f64 / test.n_samples() as f64;
        assert!(acc >= 0.99, "sign-rule accuracy {acc}");
    }

    /// In institution 1, f1 carries no class signal; in institution 2, f11.
    #[test]
    fn artificial_overlap_structure() {
        let (part, _) = generate_artificial(1600, 7, 0.3, 1.0).unwrap();
        let class_mean = |inst: usize, col_party: usize, col: usize, class: usize| {
            let block = &part.blocks[inst][col_party];
            let labels = &part.row_group_labels[inst];
            let mut sum = 0.0;
            let mut count = 0;
            for (r, &l) in labels.iter().enumerate() {
                if l == class {
                    sum += block[(r, col)];
                    count += 1;
                }
            }
            sum / count as f64
        };
        let gap1 = (class_mean(0, 0, 0, 0) - class_mean(0, 0, 0, 1)).abs();
        assert!(gap1 < 0.1 * 0.3, "institution 1 f1 gap {gap1}");
        let gap2 = (class_mean(1, 1, 0, 0) - class_mean(1, 1, 0, 1)).abs();
        assert!(gap2 < 0.1 * 0.3, "institution 2 f11 gap {gap2}");
    }

    #[test]
    fn csv_first_appearance_encoding() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,x2,label\n0.5,1.0,A\n0.25,2.0,B\n1.5,3.0,A").unwrap();
        let data = load_csv(f.path(), "label").unwrap();
        assert_eq!(data.labels, vec![0, 1, 0]);
        assert_eq!(data.class_count, 2);
        assert_eq!(data.label_names, vec!["A", "B"]);
        assert_eq!(data.feature_names, vec!["x1", "x2"]);
        assert_eq!(data.x[(2, 0)], 1.5);
    }

    #[test]
    fn csv_rejects_single_class() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,label\n1.0,A\n2.0,A").unwrap();
        let err = load_csv(f.path(), "label").unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn csv_reports_bad_cell_location() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,y,label\n1.0,2.0,A\n1.0,,B").unwrap();
        let err = load_csv(f.path(), "label").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("`y`"), "got: {msg}");
    }

    #[test]
    fn csv_missing_column_and_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,label\n1.0,A\n2.0,B").unwrap();
        assert!(load_csv(f.path(), "nope").is_err());
        assert!(load_csv("/definitely/not/here.csv", "label").is_err());
    }

    proptest! {
        /// partition -> reassemble is the identity for arbitrary cuts.
        #[test]
        fn partition_reassemble_roundtrip(
            n in 2usize..16,
            m in 2usize..10,
            row_cut_bits in proptest::collection::vec(any::<bool>(), 15),
            col_cut_bits in proptest::collection::vec(any::<bool>(), 9),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Matrix::from_fn(n, m, |_, _| rng.random_range(-10.0..10.0));
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let data = LabeledDataset::new(
                x.clone(), labels.clone(), 3,
                (0..m).map(|j| format!("c{j}")).collect(),
                vec!["a".into(), "b".into(), "c".into()],
            ).unwrap();
            let row_cuts: Vec<usize> = (1..n).filter(|&k| row_cut_bits[k - 1]).collect();
            let col_cuts: Vec<usize> = (1..m).filter(|&k| col_cut_bits[k - 1]).collect();
            let part = partition(&data, &row_cuts, &col_cuts).unwrap();
            prop_assert_eq!(part.reassemble(), x);
            prop_assert_eq!(part.stacked_labels(), labels);
        }
    }
}
