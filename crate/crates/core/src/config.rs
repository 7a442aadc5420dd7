//! Experiment configuration.
//!
//! One [`ExperimentConfig`] drives a full comparison run (centralized,
//! individual, and collaborative analyses over several trials). The CLI
//! deserializes it from a TOML file; defaults reproduce the bundled
//! artificial benchmark. Structural validation happens at parse time,
//! shape-dependent validation (`dim < m_j`, anchor tall enough) once the
//! data is loaded and before any fitting.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorMethod;
use crate::collaboration::SolverKind;
use crate::dataset::PartitionedDataset;
use crate::dimred::LppConfig;
use crate::distill::TreeParams;
use crate::error::{Error, Result};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// The built-in 20-feature two-institution benchmark.
    Synthetic {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_blob_std")]
        blob_std: f64,
        #[serde(default = "default_noise_range")]
        noise_range: f64,
    },
    /// A labeled CSV split by explicit cut positions.
    Csv {
        train_path: String,
        label_column: String,
        #[serde(default)]
        row_cuts: Vec<usize>,
        #[serde(default)]
        col_cuts: Vec<usize>,
        /// Separate test CSV with the same columns; required for `run`,
        /// ignored by `crossval`.
        #[serde(default)]
        test_path: Option<String>,
    },
}

fn default_n() -> usize {
    1600
}
fn default_blob_std() -> f64 {
    0.3
}
fn default_noise_range() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    Lpp,
    Pca,
}

/// Intermediate dimension: one global value or a full per-party grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimSpec {
    Global(usize),
    PerParty(Vec<Vec<usize>>),
}

impl DimSpec {
    /// Expand to a `c x d` grid.
    pub fn resolve(&self, institutions: usize, parties: usize) -> Result<Vec<Vec<usize>>> {
        match self {
            DimSpec::Global(dim) => Ok(vec![vec![*dim; parties]; institutions]),
            DimSpec::PerParty(grid) => {
                if grid.len() != institutions || grid.iter().any(|row| row.len() != parties) {
                    return Err(config_err(
                        "reduction.dim",
                        format!("per-party grid must be {institutions} x {parties}"),
                    ));
                }
                Ok(grid.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionConfig {
    #[serde(default = "default_reduction_kind")]
    pub kind: ReductionKind,
    #[serde(default = "default_dim")]
    pub dim: DimSpec,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// Heat-kernel parameter; absent = mean squared edge distance.
    #[serde(default)]
    pub heat_t: Option<f64>,
    /// Ridge added to the LPP moment matrix; absent = trace-scaled default.
    #[serde(default)]
    pub ridge_eps: Option<f64>,
    #[serde(default)]
    pub standardize: bool,
}

fn default_reduction_kind() -> ReductionKind {
    ReductionKind::Lpp
}
fn default_dim() -> DimSpec {
    DimSpec::Global(4)
}
fn default_knn_k() -> usize {
    7
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            kind: default_reduction_kind(),
            dim: default_dim(),
            knn_k: default_knn_k(),
            heat_t: None,
            ridge_eps: None,
            standardize: false,
        }
    }
}

impl ReductionConfig {
    pub fn lpp_config(&self) -> LppConfig {
        LppConfig {
            knn_k: self.knn_k,
            heat_t: self.heat_t,
            ridge_eps: self.ridge_eps,
            standardize: self.standardize,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorConfig {
    #[serde(default = "default_anchor_method")]
    pub method: AnchorMethod,
    #[serde(default = "default_anchor_rows")]
    pub rows: usize,
    #[serde(default = "default_noise_ratio")]
    pub noise_ratio: f64,
    /// Explicit SVD rank for the perturbation generator; absent = smallest
    /// rank keeping 95% of the squared singular mass.
    #[serde(default)]
    pub svd_rank: Option<usize>,
    /// Generate a second, independent anchor for distillation.
    #[serde(default)]
    pub separate_interp: bool,
    /// Write the assembled anchor to `anchor.csv` in each trial directory.
    #[serde(default)]
    pub export_csv: bool,
}

fn default_anchor_method() -> AnchorMethod {
    AnchorMethod::SvdPerturb
}
fn default_anchor_rows() -> usize {
    2500
}
fn default_noise_ratio() -> f64 {
    0.1
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            method: default_anchor_method(),
            rows: default_anchor_rows(),
            noise_ratio: default_noise_ratio(),
            svd_rank: None,
            separate_interp: false,
            export_csv: false,
        }
    }
}

/// Kernel inverse-width: the median heuristic or an explicit value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Fixed(f64),
    Named(MedianTag),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianTag {
    Median,
}

impl GammaSpec {
    pub fn is_median(&self) -> bool {
        matches!(self, GammaSpec::Named(MedianTag::Median))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: GammaSpec,
    /// Subsample cap for the median heuristic.
    #[serde(default = "default_median_cap")]
    pub median_cap: usize,
}

fn default_lambda() -> f64 {
    0.01
}
fn default_gamma() -> GammaSpec {
    GammaSpec::Named(MedianTag::Median)
}
fn default_median_cap() -> usize {
    1000
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            gamma: default_gamma(),
            median_cap: default_median_cap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeConfig {
    /// 0 means unbounded.
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_min_impurity_decrease")]
    pub min_impurity_decrease: f64,
}

fn default_max_depth() -> usize {
    10
}
fn default_min_leaf() -> usize {
    5
}
fn default_min_impurity_decrease() -> f64 {
    1e-7
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: default_max_depth(),
            min_leaf: default_min_leaf(),
            min_impurity_decrease: default_min_impurity_decrease(),
        }
    }
}

impl TreeConfig {
    pub fn params(&self) -> TreeParams {
        TreeParams {
            max_depth: if self.max_depth == 0 {
                None
            } else {
                Some(self.max_depth)
            },
            min_leaf: self.min_leaf,
            min_impurity_decrease: self.min_impurity_decrease,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_data")]
    pub data: DataConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub anchor: AnchorConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default = "default_solver")]
    pub solver: SolverKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_data() -> DataConfig {
    DataConfig::Synthetic {
        n: default_n(),
        blob_std: default_blob_std(),
        noise_range: default_noise_range(),
    }
}
fn default_solver() -> SolverKind {
    SolverKind::Tls
}
fn default_trials() -> usize {
    10
}
fn default_output_dir() -> String {
    "runs/experiment".to_string()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: default_data(),
            reduction: ReductionConfig::default(),
            anchor: AnchorConfig::default(),
            learner: LearnerConfig::default(),
            tree: TreeConfig::default(),
            solver: default_solver(),
            trials: default_trials(),
            seed: 0,
            output_dir: default_output_dir(),
        }
    }
}

impl ExperimentConfig {
    /// The bundled artificial benchmark: n = 1600, LPP to 4 dimensions per
    /// party, SVD-perturbed anchor with 2500 rows, lambda = 0.01, 10 trials.
    pub fn artificial_preset() -> Self {
        Self {
            seed: 7,
            output_dir: "runs/artificial".to_string(),
            ..Self::default()
        }
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("trials", "must be at least 1"));
        }
        if self.learner.lambda < 0.0 {
            return Err(config_err("learner.lambda", "must be >= 0"));
        }
        if let GammaSpec::Fixed(g) = self.learner.gamma {
            if g <= 0.0 {
                return Err(config_err("learner.gamma", "must be positive"));
            }
        }
        if self.learner.median_cap < 2 {
            return Err(config_err("learner.median_cap", "must be at least 2"));
        }
        if self.anchor.rows == 0 {
            return Err(config_err("anchor.rows", "must be at least 1"));
        }
        if self.anchor.noise_ratio < 0.0 {
            return Err(config_err("anchor.noise_ratio", "must be >= 0"));
        }
        if self.tree.min_leaf == 0 {
            return Err(config_err("tree.min_leaf", "must be at least 1"));
        }
        if self.tree.min_impurity_decrease < 0.0 {
            return Err(config_err("tree.min_impurity_decrease", "must be >= 0"));
        }
        if self.reduction.knn_k == 0 {
            return Err(config_err("reduction.knn_k", "must be at least 1"));
        }
        match &self.data {
            DataConfig::Synthetic {
                n,
                blob_std,
                noise_range,
            } => {
                if *n == 0 || n % 4 != 0 {
                    return Err(config_err("data.n", "must be a positive multiple of 4"));
                }
                if *blob_std <= 0.0 {
                    return Err(config_err("data.blob_std", "must be positive"));
                }
                if *noise_range <= 0.0 {
                    return Err(config_err("data.noise_range", "must be positive"));
                }
            }
            DataConfig::Csv { train_path, .. } => {
                if train_path.is_empty() {
                    return Err(config_err("data.train_path", "must not be empty"));
                }
            }
        }
        Ok(())
    }

    /// Shape-dependent checks, run after the data is loaded and partitioned
    /// but before any fitting.
    pub fn validate_against(&self, partition: &PartitionedDataset) -> Result<()> {
        let dims = self
            .reduction
            .dim
            .resolve(partition.institutions, partition.parties)?;
        let widths = partition.cols_per_party();
        let heights = partition.rows_per_institution();
        for (i, row) in dims.iter().enumerate() {
            for (j, &dim) in row.iter().enumerate() {
                if dim == 0 {
                    return Err(config_err("reduction.dim", "must be at least 1"));
                }
                if dim >= widths[j] {
                    return Err(config_err(
                        "reduction.dim",
                        format!(
                            "party ({i},{j}): intermediate dimension {dim} must be < block width {}",
                            widths[j]
                        ),
                    ));
                }
            }
        }
        if self.reduction.kind == ReductionKind::Lpp {
            for (i, &n_i) in heights.iter().enumerate() {
                if self.reduction.knn_k >= n_i {
                    return Err(config_err(
                        "reduction.knn_k",
                        format!("institution {i} has {n_i} samples; knn_k must be smaller"),
                    ));
                }
            }
        }
        let max_intermediate: usize = dims
            .iter()
            .map(|row| row.iter().sum::<usize>())
            .max()
            .unwrap_or(0);
        if self.anchor.rows < max_intermediate {
            return Err(config_err(
                "anchor.rows",
                format!(
                    "{} rows cannot overdetermine intermediate width {max_intermediate}",
                    self.anchor.rows
                ),
            ));
        }
        Ok(())
    }

    /// Seed for trial `t`; trials are independent streams off the base seed.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}
