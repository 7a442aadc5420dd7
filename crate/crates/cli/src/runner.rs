//! Trial execution shared by `run` and `crossval`: prepare the data, run
//! the centralized / individual / collaborative methods, collect metrics
//! and artifacts.

use anyhow::{bail, Context, Result};

use datacollab::anchor::{build_anchor, AnchorSet};
use datacollab::config::{DataConfig, ExperimentConfig};
use datacollab::dataset::{
    even_cuts, generate_artificial, load_csv, partition, LabeledDataset, PartitionedDataset,
};
use datacollab::distill::DecisionTree;
use datacollab::linalg::Matrix;
use datacollab::metrics::{accuracy, fidelity_to_ca, nmi, TrialMetrics};
use datacollab::protocol::{
    audit_trace, distill_users, predict_test, run_centralized, run_individual, run_training,
    AuditReport, Message,
};

pub const METHOD_CA: &str = "CA";
pub const METHOD_IA: &str = "IA";
pub const METHOD_CDA_ANALYST: &str = "CDA-analyst";
pub const METHOD_CDA_TREE: &str = "CDA-tree";

/// Everything a single trial needs: a partitioned training set plus a test
/// set in the original row order.
pub struct PreparedData {
    pub partitioned: PartitionedDataset,
    pub full_train: LabeledDataset,
    pub test_x: Matrix,
    pub test_labels: Vec<usize>,
}

/// Map a separately loaded dataset onto the label vocabulary of the
/// training set so dense labels agree.
pub fn align_labels(data: &mut LabeledDataset, reference: &[String]) -> Result<()> {
    let remap: Vec<usize> =
        data.label_names
            .iter()
            .map(|name| {
                reference.iter().position(|r| r == name).with_context(|| {
                    format!("test label `{name}` does not appear in training data")
                })
            })
            .collect::<Result<_>>()?;
    for l in data.labels.iter_mut() {
        *l = remap[*l];
    }
    data.label_names = reference.to_vec();
    data.class_count = reference.len();
    Ok(())
}

/// Load or synthesize the data for one `run` trial.
pub fn prepare_run_data(cfg: &ExperimentConfig, trial_seed: u64) -> Result<PreparedData> {
    match &cfg.data {
        DataConfig::Synthetic {
            n,
            blob_std,
            noise_range,
        } => {
            let (partitioned, test) = generate_artificial(*n, trial_seed, *blob_std, *noise_range)?;
            let full_train = LabeledDataset::new(
                partitioned.reassemble(),
                partitioned.stacked_labels(),
                partitioned.class_count,
                partitioned.feature_names.clone(),
                partitioned.label_names.clone(),
            )?;
            Ok(PreparedData {
                partitioned,
                full_train,
                test_x: test.x,
                test_labels: test.labels,
            })
        }
        DataConfig::Csv {
            train_path,
            label_column,
            row_cuts,
            col_cuts,
            test_path,
        } => {
            let full_train = load_csv(train_path, label_column)
                .with_context(|| format!("loading training data from {train_path}"))?;
            let partitioned = partition(&full_train, row_cuts, col_cuts)?;
            let Some(test_path) = test_path else {
                bail!("config error at `data.test_path`: csv runs need a test file (crossval does not)");
            };
            let mut test = load_csv(test_path, label_column)
                .with_context(|| format!("loading test data from {test_path}"))?;
            if test.feature_names != full_train.feature_names {
                bail!("test columns do not match training columns");
            }
            align_labels(&mut test, &full_train.label_names)?;
            Ok(PreparedData {
                partitioned,
                full_train,
                test_x: test.x,
                test_labels: test.labels,
            })
        }
    }
}

/// Output of one trial: metric rows per method plus all artifacts worth
/// writing to the run directory.
pub struct TrialArtifacts {
    pub rows: Vec<(String, TrialMetrics)>,
    pub ca_tree: DecisionTree,
    /// `(institution, party)`-indexed individual trees.
    pub ia_trees: Vec<((usize, usize), DecisionTree)>,
    pub cda_trees: Vec<DecisionTree>,
    pub trace: Vec<Message>,
    pub audit: AuditReport,
    pub anchor: AnchorSet,
    pub feature_names: Vec<String>,
    pub party_feature_names: Vec<Vec<String>>,
}

/// Run the three methods on prepared data.
#[allow(clippy::needless_range_loop)] // (i, j) are party coordinates
pub fn run_trial(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    trial_seed: u64,
) -> Result<TrialArtifacts> {
    let part = &data.partitioned;
    let tree_params = cfg.tree.params();
    cfg.validate_against(part)?;

    // centralized baseline
    let (ca_tree, ca_pred) = run_centralized(&data.full_train, &data.test_x, tree_params)?;
    let ca_row = TrialMetrics {
        nmi: nmi(&ca_pred, &data.test_labels)?,
        acc_percent: accuracy(&ca_pred, &data.test_labels)?,
        fidelity_to_ca: None,
    };

    // individual baselines: each party trains on its block and predicts its
    // feature slice of the whole test set
    let widths = part.cols_per_party();
    let mut ia_trees = Vec::new();
    let mut ia_nmi = Vec::new();
    let mut ia_acc = Vec::new();
    let mut ia_fid = Vec::new();
    let party_feature_names: Vec<Vec<String>> = widths
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let lo = part.col_offsets[j];
            part.feature_names[lo..lo + w].to_vec()
        })
        .collect();
    for i in 0..part.institutions {
        for j in 0..part.parties {
            let test_cols = data
                .test_x
                .columns(part.col_offsets[j], widths[j])
                .into_owned();
            let (tree, pred) = run_individual(
                &part.blocks[i][j],
                &part.row_group_labels[i],
                part.class_count,
                &test_cols,
                tree_params,
            )?;
            ia_nmi.push(nmi(&pred, &data.test_labels)?);
            ia_acc.push(accuracy(&pred, &data.test_labels)?);
            ia_fid.push(fidelity_to_ca(&pred, &ca_pred)?);
            ia_trees.push(((i, j), tree));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ia_row = TrialMetrics {
        nmi: mean(&ia_nmi),
        acc_percent: mean(&ia_acc),
        fidelity_to_ca: Some(mean(&ia_fid)),
    };

    // collaborative analysis
    let mut anchor = build_anchor(
        part,
        cfg.anchor.method,
        cfg.anchor.rows,
        cfg.anchor.noise_ratio,
        cfg.anchor.svd_rank,
        trial_seed,
    )?;
    if cfg.anchor.separate_interp {
        // independent interpretation anchor off a decorrelated seed
        let interp = build_anchor(
            part,
            cfg.anchor.method,
            cfg.anchor.rows,
            cfg.anchor.noise_ratio,
            cfg.anchor.svd_rank,
            trial_seed ^ 0x9e37_79b9_7f4a_7c15,
        )?;
        anchor.interp_anc = Some(interp.x_anc);
    }
    let mut trained = run_training(part, &anchor, cfg)?;
    let cda_trees = distill_users(&mut trained, &anchor, tree_params)?;

    // test rows are split evenly across institutions, in row order, so the
    // concatenated predictions line up with the ground truth
    let test_cuts = even_cuts(data.test_x.nrows(), part.institutions);
    let grid = part.partition_test(&data.test_x, &test_cuts)?;
    let per_institution = predict_test(&mut trained, &grid)?;
    let cda_pred: Vec<usize> = per_institution
        .iter()
        .flat_map(|(_, labels)| labels.iter().copied())
        .collect();
    let cda_row = TrialMetrics {
        nmi: nmi(&cda_pred, &data.test_labels)?,
        acc_percent: accuracy(&cda_pred, &data.test_labels)?,
        fidelity_to_ca: Some(fidelity_to_ca(&cda_pred, &ca_pred)?),
    };

    // the distilled trees score the same row split on raw test features
    let mut row_offsets = vec![0];
    row_offsets.extend_from_slice(&test_cuts);
    row_offsets.push(data.test_x.nrows());
    let mut tree_pred = Vec::with_capacity(data.test_x.nrows());
    for (i, tree) in cda_trees.iter().enumerate() {
        let slice = data
            .test_x
            .rows(row_offsets[i], row_offsets[i + 1] - row_offsets[i])
            .into_owned();
        tree_pred.extend(datacollab::distill::predict_tree(tree, &slice)?);
    }
    let cda_tree_row = TrialMetrics {
        nmi: nmi(&tree_pred, &data.test_labels)?,
        acc_percent: accuracy(&tree_pred, &data.test_labels)?,
        fidelity_to_ca: Some(fidelity_to_ca(&tree_pred, &ca_pred)?),
    };

    let audit = audit_trace(&trained.trace, trained.party_widths());

    Ok(TrialArtifacts {
        rows: vec![
            (METHOD_CA.into(), ca_row),
            (METHOD_IA.into(), ia_row),
            (METHOD_CDA_ANALYST.into(), cda_row),
            (METHOD_CDA_TREE.into(), cda_tree_row),
        ],
        ca_tree,
        ia_trees,
        cda_trees,
        trace: trained.trace,
        audit,
        anchor,
        feature_names: part.feature_names.clone(),
        party_feature_names,
    })
}

/// Stratified fold assignment: per class, indices are shuffled with the
/// trial seed and dealt round-robin. Returns `fold_of[sample]`.
pub fn stratified_folds(
    labels: &[usize],
    class_count: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if folds < 2 {
        bail!("folds must be at least 2");
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < folds {
            bail!(
                "class {class} has {} samples, fewer than {folds} folds",
                members.len()
            );
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    Ok(fold_of)
}

/// Build the per-fold prepared data for cross-validation: the held-out fold
/// becomes the test set, the rest is re-partitioned into `c` institutions
/// by even row cuts (in shuffled stratified order, so institutions stay
/// class-balanced).
pub fn prepare_fold(
    full: &LabeledDataset,
    fold_of: &[usize],
    fold: usize,
    institutions: usize,
    col_cuts: &[usize],
    seed: u64,
) -> Result<PreparedData> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut train_idx: Vec<usize> = (0..full.n_samples())
        .filter(|&i| fold_of[i] != fold)
        .collect();
    let test_idx: Vec<usize> = (0..full.n_samples())
        .filter(|&i| fold_of[i] == fold)
        .collect();
    // seeded shuffle keeps institutions class-mixed regardless of file order
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (fold as u64).wrapping_mul(0x9e37));
    train_idx.shuffle(&mut rng);

    let take = |idx: &[usize]| -> (Matrix, Vec<usize>) {
        let x = Matrix::from_fn(idx.len(), full.n_features(), |r, c| full.x[(idx[r], c)]);
        let labels = idx.iter().map(|&i| full.labels[i]).collect();
        (x, labels)
    };
    let (train_x, train_labels) = take(&train_idx);
    let (test_x, test_labels) = take(&test_idx);

    let train = LabeledDataset::new(
        train_x,
        train_labels,
        full.class_count,
        full.feature_names.clone(),
        full.label_names.clone(),
    )?;
    let row_cuts = even_cuts(train.n_samples(), institutions);
    let partitioned = partition(&train, &row_cuts, col_cuts)?;
    Ok(PreparedData {
        partitioned,
        full_train: train,
        test_x,
        test_labels,
    })
}
