//! Command implementations behind the CLI front end. They are plain
//! functions over explicit inputs so integration tests drive them directly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use datacollab::anchor;
use datacollab::config::{DataConfig, ExperimentConfig};
use datacollab::dataset::generate_artificial;
use datacollab::distill::{export_tree, DecisionTree, TreeFormat};
use datacollab::linalg::Matrix;
use datacollab::metrics::{aggregate, MetricsReport, TrialMetrics};
use datacollab::protocol::trace_to_jsonl;

use crate::runner::{self, TrialArtifacts};

/// Environment variable that re-roots all run directories.
pub const OUTPUT_ROOT_ENV: &str = "DATACOLLAB_OUTPUT_ROOT";

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Resolve the run directory: explicit override beats config, and the
/// output-root environment variable re-roots relative paths.
pub fn resolve_output_dir(cfg: &ExperimentConfig, out_override: Option<&Path>) -> PathBuf {
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

fn write_matrix_csv(
    path: &Path,
    x: &Matrix,
    labels: &[usize],
    feature_names: &[String],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&feature_names.join(","));
    out.push_str(",label\n");
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out.push_str(&format!("{:?},", x[(i, j)]));
        }
        out.push_str(&format!("{}\n", labels[i]));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `synth`: write the artificial benchmark as train/test CSVs plus the cut
/// positions that reproduce the partition.
pub fn cmd_synth(
    out_dir: &Path,
    n: usize,
    seed: u64,
    blob_std: f64,
    noise_range: f64,
) -> Result<PathBuf> {
    let (part, test) = generate_artificial(n, seed, blob_std, noise_range)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    write_matrix_csv(
        &out_dir.join("train.csv"),
        &part.reassemble(),
        &part.stacked_labels(),
        &part.feature_names,
    )?;
    write_matrix_csv(
        &out_dir.join("test.csv"),
        &test.x,
        &test.labels,
        &test.feature_names,
    )?;
    let cuts = format!(
        "row_cuts = [{}]\ncol_cuts = [{}]\n",
        part.row_offsets[1..part.row_offsets.len() - 1]
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", "),
        part.col_offsets[1..part.col_offsets.len() - 1]
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", "),
    );
    fs::write(out_dir.join("cuts.toml"), cuts)?;
    Ok(out_dir.to_path_buf())
}

/// Tree artifact with enough context to re-render it later.
#[derive(Serialize, Deserialize)]
pub struct TreeArtifact {
    pub feature_names: Vec<String>,
    pub tree: DecisionTree,
}

fn write_tree_files(dir: &Path, stem: &str, tree: &DecisionTree, names: &[String]) -> Result<()> {
    fs::write(
        dir.join(format!("{stem}.txt")),
        export_tree(tree, names, TreeFormat::IndentedText)?,
    )?;
    fs::write(
        dir.join(format!("{stem}.dot")),
        export_tree(tree, names, TreeFormat::Dot)?,
    )?;
    Ok(())
}

fn write_trial_artifacts(
    trial_dir: &Path,
    artifacts: &TrialArtifacts,
    export_anchor: bool,
) -> Result<()> {
    fs::create_dir_all(trial_dir)?;
    write_tree_files(
        trial_dir,
        "ca_tree",
        &artifacts.ca_tree,
        &artifacts.feature_names,
    )?;
    for ((i, j), tree) in &artifacts.ia_trees {
        write_tree_files(
            trial_dir,
            &format!("ia_tree_i{i}_j{j}"),
            tree,
            &artifacts.party_feature_names[*j],
        )?;
    }
    for (i, tree) in artifacts.cda_trees.iter().enumerate() {
        write_tree_files(
            trial_dir,
            &format!("cda_tree_i{i}"),
            tree,
            &artifacts.feature_names,
        )?;
        let artifact = TreeArtifact {
            feature_names: artifacts.feature_names.clone(),
            tree: tree.clone(),
        };
        fs::write(
            trial_dir.join(format!("cda_tree_i{i}.json")),
            serde_json::to_string_pretty(&artifact)?,
        )?;
    }
    fs::write(
        trial_dir.join("trace.jsonl"),
        trace_to_jsonl(&artifacts.trace),
    )?;
    fs::write(trial_dir.join("audit.txt"), artifacts.audit.render())?;
    if export_anchor {
        anchor::export_csv(&artifacts.anchor, trial_dir.join("anchor.csv"))?;
    }
    Ok(())
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: MetricsReport,
    pub audits_passed: bool,
    /// Per-trial metric rows in execution order (method, trial, metrics).
    pub trial_rows: Vec<Vec<(String, TrialMetrics)>>,
}

fn finalize_report(
    dir: &Path,
    method_order: &[&str],
    trial_rows: &[Vec<(String, TrialMetrics)>],
    audits_passed: bool,
) -> Result<RunOutcome> {
    let mut methods = Vec::new();
    for &name in method_order {
        let rows: Vec<TrialMetrics> = trial_rows
            .iter()
            .flat_map(|trial| {
                trial
                    .iter()
                    .filter(|(m, _)| m == name)
                    .map(|(_, v)| *v)
                    .collect::<Vec<_>>()
            })
            .collect();
        methods.push(aggregate(name, &rows)?);
    }
    let report = MetricsReport { methods };
    fs::write(dir.join("metrics.csv"), report.to_csv())?;
    fs::write(dir.join("table.txt"), report.to_table())?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        report,
        audits_passed,
        trial_rows: trial_rows.to_vec(),
    })
}

const METHOD_ORDER: [&str; 4] = [
    runner::METHOD_CA,
    runner::METHOD_IA,
    runner::METHOD_CDA_ANALYST,
    runner::METHOD_CDA_TREE,
];

/// `run`: execute every trial, write metrics, tables, trees, traces and
/// audits under the run directory.
pub fn cmd_run(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = resolve_output_dir(cfg, out_override);
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating run directory {}", dir.display()))?;
    fs::write(dir.join("config.toml"), toml::to_string_pretty(cfg)?)?;

    let mut trial_rows = Vec::with_capacity(cfg.trials);
    let mut audits_passed = true;
    for trial in 0..cfg.trials {
        let seed = cfg.trial_seed(trial);
        // synthetic runs redraw the data each trial; csv runs hold the data
        // fixed and only the seeded anchor generation varies
        let data = runner::prepare_run_data(cfg, seed)?;
        let artifacts =
            runner::run_trial(cfg, &data, seed).with_context(|| format!("trial {trial} failed"))?;
        write_trial_artifacts(
            &dir.join(format!("trial_{trial:03}")),
            &artifacts,
            cfg.anchor.export_csv,
        )?;
        if !artifacts.audit.passed {
            audits_passed = false;
            log::error!("trial {trial}: audit failed");
        }
        trial_rows.push(artifacts.rows);
    }
    finalize_report(&dir, &METHOD_ORDER, &trial_rows, audits_passed)
}

/// `crossval`: stratified k-fold evaluation of a CSV dataset. Each
/// (trial, fold) pair contributes one metrics row per method.
pub fn cmd_crossval(
    cfg: &ExperimentConfig,
    folds: usize,
    out_override: Option<&Path>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let DataConfig::Csv {
        train_path,
        label_column,
        col_cuts,
        row_cuts,
        ..
    } = &cfg.data
    else {
        bail!("config error at `data.source`: crossval needs a csv source");
    };
    if folds < 2 {
        bail!("folds must be at least 2");
    }
    let institutions = row_cuts.len() + 1;

    let full = datacollab::dataset::load_csv(train_path, label_column)
        .with_context(|| format!("loading {train_path}"))?;

    let dir = resolve_output_dir(cfg, out_override);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), toml::to_string_pretty(cfg)?)?;

    let mut trial_rows = Vec::new();
    let mut audits_passed = true;
    for trial in 0..cfg.trials {
        let seed = cfg.trial_seed(trial);
        let fold_of = runner::stratified_folds(&full.labels, full.class_count, folds, seed)?;
        for fold in 0..folds {
            let data = runner::prepare_fold(&full, &fold_of, fold, institutions, col_cuts, seed)?;
            let artifacts = runner::run_trial(cfg, &data, seed.wrapping_add(fold as u64))
                .with_context(|| format!("trial {trial} fold {fold} failed"))?;
            write_trial_artifacts(
                &dir.join(format!("trial_{trial:03}_fold_{fold}")),
                &artifacts,
                cfg.anchor.export_csv,
            )?;
            if !artifacts.audit.passed {
                audits_passed = false;
            }
            trial_rows.push(artifacts.rows);
        }
    }
    finalize_report(&dir, &METHOD_ORDER, &trial_rows, audits_passed)
}

/// `export`: re-render a stored collaborative tree from a finished run.
pub fn cmd_export(
    run_dir: &Path,
    institution: usize,
    format: TreeFormat,
    trial: Option<usize>,
) -> Result<PathBuf> {
    let trial_dir = match trial {
        Some(t) => {
            let d = run_dir.join(format!("trial_{t:03}"));
            if !d.is_dir() {
                bail!("no trial directory {}", d.display());
            }
            d
        }
        None => {
            // default: last trial directory in lexical order
            let mut dirs: Vec<PathBuf> = fs::read_dir(run_dir)
                .with_context(|| format!("reading {}", run_dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_dir()
                        && p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("trial_"))
                })
                .collect();
            dirs.sort();
            dirs.pop()
                .with_context(|| format!("no trial directories under {}", run_dir.display()))?
        }
    };
    let json_path = trial_dir.join(format!("cda_tree_i{institution}.json"));
    if !json_path.is_file() {
        bail!(
            "no stored tree for institution {institution} (looked for {})",
            json_path.display()
        );
    }
    let artifact: TreeArtifact = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let (ext, rendered) = match format {
        TreeFormat::IndentedText => (
            "txt",
            export_tree(
                &artifact.tree,
                &artifact.feature_names,
                TreeFormat::IndentedText,
            )?,
        ),
        TreeFormat::Dot => (
            "dot",
            export_tree(&artifact.tree, &artifact.feature_names, TreeFormat::Dot)?,
        ),
    };
    let out_dir = run_dir.join("exports");
    fs::create_dir_all(&out_dir)?;
    let out_path = out_dir.join(format!("tree_i{institution}.{ext}"));
    fs::write(&out_path, rendered)?;
    Ok(out_path)
}
