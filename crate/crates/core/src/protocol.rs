//! One-path collaboration protocol with an auditable message trace.
//!
//! The roles are simulated in-process. Every cross-party exchange appends a
//! typed [`Message`] carrying only metadata (sender, receiver, payload kind,
//! shape, step), so information flow is checkable after the fact: raw
//! blocks and mapping functions have no payload kind at all, and the audit
//! verifies that everything a user shares is dimension-reduced.
//!
//! Training is a single user-to-analyst round:
//!
//! ```text
//! step  1   users broadcast anchor blocks
//! step  3-5 users fit maps, reduce their block and the anchor slice
//! step  6   users share intermediates and ground truth with the analyst
//! step  7-9 analyst aligns institutions into the collaboration space
//! step 10-11 analyst stacks representations and fits the kernel model
//! step 12-13 analyst predicts the anchor per institution
//! step 14   analyst returns anchor predictions
//! step 15   institutions distill their trees
//! ```
//!
//! Prediction adds one round per test batch (steps 16-17).

// (i, j) block coordinates are the domain language here; indexed loops stay
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorSet;
use crate::collaboration::{build_collaboration, CollaborationSpace};
use crate::config::{ExperimentConfig, GammaSpec, ReductionKind};
use crate::dataset::{one_hot, LabeledDataset, PartitionedDataset};
use crate::dimred::{apply_map, fit_lpp, fit_pca, LinearMap};
use crate::distill::{fit_tree, predict_tree, DecisionTree, TreeParams};
use crate::error::{Error, Result};
use crate::learner::{argmax_labels, fit_krr, median_gamma, predict_krr, KrrModel};
use crate::linalg::{hcat, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    User { institution: usize, party: usize },
    Analyst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Receiver {
    Party(Party),
    Broadcast,
}

/// Everything that is allowed to move between parties. There is, by
/// construction, no variant for raw data blocks or mapping functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    AnchorBlock,
    IntermediateData,
    IntermediateAnchor,
    GroundTruth,
    AnchorPredictions,
    TestIntermediate,
    TestPredictions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub sender: Party,
    pub receiver: Receiver,
    pub kind: PayloadKind,
    pub shape: (usize, usize),
    /// Step number in the one-path training listing (16/17 for prediction).
    pub step: u8,
}

/// Serialize a trace as JSON lines, one message per line.
pub fn trace_to_jsonl(trace: &[Message]) -> String {
    let mut out = String::new();
    for msg in trace {
        out.push_str(&serde_json::to_string(msg).expect("trace serializes"));
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<Message>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::invalid(format!("bad trace line: {e}")))
        })
        .collect()
}

/// Analyst-side state after training. This is everything the analyst ever
/// sees: intermediates, alignment maps, the kernel model, and predictions.
#[derive(Debug)]
pub struct AnalystState {
    pub collab: CollaborationSpace,
    pub model: KrrModel,
    /// Per-institution anchor intermediates (alignment anchor).
    pub anchor_intermediates: Vec<Matrix>,
    /// Per-institution intermediates of the distillation anchor (same as
    /// `anchor_intermediates` unless a separate interpretation anchor is
    /// used).
    pub distill_intermediates: Vec<Matrix>,
    /// Per-institution anchor score matrices `Y_i_anc`.
    pub anchor_scores: Vec<Matrix>,
    /// Stacked collaboration representation of the training data.
    pub representation: Matrix,
}

/// Result of the training phase. User-side mapping functions are private to
/// this struct: analyst-facing accessors expose intermediate outputs only.
#[derive(Debug)]
pub struct TrainedCollaboration {
    analyst: AnalystState,
    /// Private per-(i,j) mapping functions; never readable from outside.
    user_maps: Vec<Vec<LinearMap>>,
    /// Per-institution distilled trees, pending until [`distill_users`].
    pub trees: Vec<Option<DecisionTree>>,
    pub trace: Vec<Message>,
    col_widths: Vec<usize>,
    class_count: usize,
}

impl TrainedCollaboration {
    pub fn analyst(&self) -> &AnalystState {
        &self.analyst
    }

    pub fn institutions(&self) -> usize {
        self.user_maps.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Column widths `m_j` of the private blocks (needed by the audit).
    pub fn party_widths(&self) -> &[usize] {
        &self.col_widths
    }
}

fn analyst_party() -> Party {
    Party::Analyst
}

fn user(institution: usize, party: usize) -> Party {
    Party::User { institution, party }
}

fn to_analyst(sender: Party, kind: PayloadKind, shape: (usize, usize), step: u8) -> Message {
    Message {
        sender,
        receiver: Receiver::Party(analyst_party()),
        kind,
        shape,
        step,
    }
}

/// Execute the training phase (steps 1-13).
pub fn run_training(
    partitioned: &PartitionedDataset,
    anchor: &AnchorSet,
    cfg: &ExperimentConfig,
) -> Result<TrainedCollaboration> {
    let c = partitioned.institutions;
    let d = partitioned.parties;
    let widths = partitioned.cols_per_party();
    let class_count = partitioned.class_count;

    if anchor.col_offsets != partitioned.col_offsets {
        return Err(Error::invalid(
            "anchor feature boundaries do not match the partition",
        ));
    }
    let dims = cfg.reduction.dim.resolve(c, d)?;
    for (i, row) in dims.iter().enumerate() {
        for (j, &dim) in row.iter().enumerate() {
            if dim > widths[j] {
                return Err(Error::invalid(format!(
                    "party ({i},{j}): intermediate dimension {dim} exceeds block width {}",
                    widths[j]
                )));
            }
        }
    }
    let max_intermediate = dims
        .iter()
        .map(|row| row.iter().sum::<usize>())
        .max()
        .unwrap_or(0);
    crate::anchor::check_overdetermined(anchor.rows(), max_intermediate)?;

    let mut trace: Vec<Message> = Vec::new();

    // step 1: anchor blocks circulate among users
    let mut provenance_rows = vec![0usize; c];
    for &i in &anchor.row_provenance {
        if i < c {
            provenance_rows[i] += 1;
        }
    }
    for i in 0..c {
        for j in 0..d {
            trace.push(Message {
                sender: user(i, j),
                receiver: Receiver::Broadcast,
                kind: PayloadKind::AnchorBlock,
                shape: (provenance_rows[i], widths[j]),
                step: 1,
            });
        }
    }

    // steps 3-5, user side
    let lpp_cfg = cfg.reduction.lpp_config();
    let mut user_maps: Vec<Vec<LinearMap>> = Vec::with_capacity(c);
    let mut data_parts: Vec<Vec<Matrix>> = Vec::with_capacity(c);
    let mut anchor_parts: Vec<Vec<Matrix>> = Vec::with_capacity(c);
    let mut interp_parts: Vec<Vec<Matrix>> = Vec::with_capacity(c);
    for i in 0..c {
        let mut maps_row = Vec::with_capacity(d);
        let mut data_row = Vec::with_capacity(d);
        let mut anchor_row = Vec::with_capacity(d);
        let mut interp_row = Vec::with_capacity(d);
        for j in 0..d {
            let block = &partitioned.blocks[i][j];
            let map = match cfg.reduction.kind {
                ReductionKind::Lpp => fit_lpp(block, dims[i][j], &lpp_cfg),
                ReductionKind::Pca => fit_pca(block, dims[i][j]),
            }
            .map_err(|e| e.at_step(3))?;
            let reduced = apply_map(&map, block).map_err(|e| e.at_step(4))?;
            let anchor_block = anchor.column_block(j);
            let reduced_anchor = apply_map(&map, &anchor_block).map_err(|e| e.at_step(5))?;
            if let Some(interp_block) = anchor.interp_column_block(j) {
                interp_row.push(apply_map(&map, &interp_block).map_err(|e| e.at_step(5))?);
            }
            maps_row.push(map);
            data_row.push(reduced);
            anchor_row.push(reduced_anchor);
        }
        user_maps.push(maps_row);
        data_parts.push(data_row);
        anchor_parts.push(anchor_row);
        interp_parts.push(interp_row);
    }

    // step 6: the single user-to-analyst round
    for i in 0..c {
        for j in 0..d {
            trace.push(to_analyst(
                user(i, j),
                PayloadKind::IntermediateData,
                data_parts[i][j].shape(),
                6,
            ));
            trace.push(to_analyst(
                user(i, j),
                PayloadKind::IntermediateAnchor,
                anchor_parts[i][j].shape(),
                6,
            ));
            if let Some(extra) = interp_parts[i].get(j) {
                trace.push(to_analyst(
                    user(i, j),
                    PayloadKind::IntermediateAnchor,
                    extra.shape(),
                    6,
                ));
            }
        }
        trace.push(to_analyst(
            user(i, 0),
            PayloadKind::GroundTruth,
            (partitioned.row_group_labels[i].len(), class_count),
            6,
        ));
    }

    // step 7: institution-wise concatenation
    let data_intermediates: Vec<Matrix> = data_parts
        .iter()
        .map(|row| hcat(row))
        .collect::<Result<_>>()
        .map_err(|e| e.at_step(7))?;
    let anchor_intermediates: Vec<Matrix> = anchor_parts
        .iter()
        .map(|row| hcat(row))
        .collect::<Result<_>>()
        .map_err(|e| e.at_step(7))?;
    let distill_intermediates: Vec<Matrix> = if anchor.interp_anc.is_some() {
        interp_parts
            .iter()
            .map(|row| hcat(row))
            .collect::<Result<_>>()
            .map_err(|e| e.at_step(7))?
    } else {
        anchor_intermediates.clone()
    };

    // steps 8-9: alignment
    let (collab, representation) =
        build_collaboration(&anchor_intermediates, &data_intermediates, cfg.solver)
            .map_err(|e| e.at_step(8))?;
    if collab.fell_back() {
        log::warn!("TLS alignment fell back to LS for at least one institution");
    }

    // steps 10-11: stack ground truth, fit the kernel model
    let labels = partitioned.stacked_labels();
    let y = one_hot(&labels, class_count).map_err(|e| e.at_step(10))?;
    let gamma = match cfg.learner.gamma {
        GammaSpec::Fixed(g) => g,
        _ => median_gamma(&representation, cfg.learner.median_cap).map_err(|e| e.at_step(11))?,
    };
    let model =
        fit_krr(&representation, &y, cfg.learner.lambda, gamma).map_err(|e| e.at_step(11))?;

    // steps 12-13: anchor predictions per institution
    let mut anchor_scores = Vec::with_capacity(c);
    for i in 0..c {
        let mapped = &distill_intermediates[i] * &collab.maps[i];
        let scores = predict_krr(&model, &mapped).map_err(|e| e.at_step(13))?;
        anchor_scores.push(scores);
    }

    Ok(TrainedCollaboration {
        analyst: AnalystState {
            collab,
            model,
            anchor_intermediates,
            distill_intermediates,
            anchor_scores,
            representation,
        },
        user_maps,
        trees: vec![None; c],
        trace,
        col_widths: widths,
        class_count,
    })
}

/// Steps 14-15: return anchor predictions and fit one tree per institution
/// on the full-width anchor rows.
pub fn distill_users(
    trained: &mut TrainedCollaboration,
    anchor: &AnchorSet,
    params: TreeParams,
) -> Result<Vec<DecisionTree>> {
    let x_distill = anchor.interp_anc.as_ref().unwrap_or(&anchor.x_anc);
    let mut trees = Vec::with_capacity(trained.institutions());
    for i in 0..trained.institutions() {
        let scores = &trained.analyst.anchor_scores[i];
        if scores.nrows() != x_distill.nrows() {
            return Err(Error::invalid(format!(
                "institution {i}: {} anchor predictions for {} anchor rows",
                scores.nrows(),
                x_distill.nrows()
            ))
            .at_step(14));
        }
        trained.trace.push(Message {
            sender: analyst_party(),
            receiver: Receiver::Party(user(i, 0)),
            kind: PayloadKind::AnchorPredictions,
            shape: scores.shape(),
            step: 14,
        });
        let labels = argmax_labels(scores);
        let distinct = {
            let mut l = labels.clone();
            l.sort_unstable();
            l.dedup();
            l.len()
        };
        if distinct < 2 {
            log::warn!(
                "institution {i}: anchor predictions collapse to one class; \
                 the distilled tree will be a single leaf"
            );
        }
        let tree =
            fit_tree(x_distill, &labels, trained.class_count, params).map_err(|e| e.at_step(15))?;
        trained.trees[i] = Some(tree.clone());
        trees.push(tree);
    }
    Ok(trees)
}

/// Prediction phase: each institution's test rows flow through its own
/// maps, the alignment, and the analyst model (steps 16-17). Returns
/// per-institution `(scores, labels)`.
pub fn predict_test(
    trained: &mut TrainedCollaboration,
    test_blocks: &[Vec<Matrix>],
) -> Result<Vec<(Matrix, Vec<usize>)>> {
    let c = trained.institutions();
    if test_blocks.len() != c {
        return Err(Error::invalid(format!(
            "{} test row-groups for {c} institutions",
            test_blocks.len()
        )));
    }
    // user-side phase first, so the trace stays totally ordered by step
    let mut intermediates = Vec::with_capacity(c);
    for (i, group) in test_blocks.iter().enumerate() {
        let maps = &trained.user_maps[i];
        if group.len() != maps.len() {
            return Err(Error::invalid(format!(
                "institution {i}: {} test blocks for {} parties",
                group.len(),
                maps.len()
            )));
        }
        let mut reduced = Vec::with_capacity(group.len());
        for (j, block) in group.iter().enumerate() {
            if block.ncols() != trained.col_widths[j] {
                return Err(Error::invalid(format!(
                    "test block ({i},{j}) has {} columns, party holds {}",
                    block.ncols(),
                    trained.col_widths[j]
                )));
            }
            let r = apply_map(&maps[j], block)?;
            trained.trace.push(to_analyst(
                user(i, j),
                PayloadKind::TestIntermediate,
                r.shape(),
                16,
            ));
            reduced.push(r);
        }
        intermediates.push(hcat(&reduced)?);
    }

    let mut out = Vec::with_capacity(c);
    for (i, concatenated) in intermediates.into_iter().enumerate() {
        let mapped = concatenated * &trained.analyst.collab.maps[i];
        let scores = predict_krr(&trained.analyst.model, &mapped)?;
        trained.trace.push(Message {
            sender: analyst_party(),
            receiver: Receiver::Party(user(i, 0)),
            kind: PayloadKind::TestPredictions,
            shape: scores.shape(),
            step: 17,
        });
        let labels = argmax_labels(&scores);
        out.push((scores, labels));
    }
    Ok(out)
}

/// Centralized baseline: one tree on the pooled data with true labels.
pub fn run_centralized(
    full: &LabeledDataset,
    test: &Matrix,
    params: TreeParams,
) -> Result<(DecisionTree, Vec<usize>)> {
    let tree = fit_tree(&full.x, &full.labels, full.class_count, params)?;
    let pred = predict_tree(&tree, test)?;
    Ok((tree, pred))
}

/// Individual baseline: a tree on one party's block and its feature slice
/// of the test set.
pub fn run_individual(
    block: &Matrix,
    labels: &[usize],
    class_count: usize,
    test_block: &Matrix,
    params: TreeParams,
) -> Result<(DecisionTree, Vec<usize>)> {
    let tree = fit_tree(block, labels, class_count, params)?;
    let pred = predict_tree(&tree, test_block)?;
    Ok((tree, pred))
}

/// One audit finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Distinct training steps carrying user-to-analyst traffic; the
    /// one-path property requires exactly 1.
    pub training_rounds: usize,
}

impl AuditReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.passed {
            "AUDIT PASS\n"
        } else {
            "AUDIT FAIL\n"
        });
        out.push_str(&format!(
            "training user->analyst rounds: {}\n",
            self.training_rounds
        ));
        for v in &self.violations {
            out.push_str(&format!(
                "violation at message {}: [{}] {}\n",
                v.index, v.rule, v.detail
            ));
        }
        out
    }
}

/// Check the structural information-flow rules on a trace:
///
/// (a) payload kinds are closed over the message enum (a parse-time fact,
///     restated here for traces loaded from disk);
/// (b) reduced payloads (`IntermediateData`, `IntermediateAnchor`,
///     `TestIntermediate`) are strictly narrower than the sender's block;
/// (c) anchor blocks flow user-to-broadcast only, intermediates and ground
///     truth user-to-analyst, predictions analyst-to-user;
/// (d) no payload kind exists for mapping functions or raw blocks, so
///     their absence from the trace is guaranteed rather than checked.
pub fn audit_trace(trace: &[Message], party_widths: &[usize]) -> AuditReport {
    let mut violations = Vec::new();
    for (index, msg) in trace.iter().enumerate() {
        let user_sender = matches!(msg.sender, Party::User { .. });
        let to_analyst = msg.receiver == Receiver::Party(Party::Analyst);
        let analyst_to_user = msg.sender == Party::Analyst
            && matches!(msg.receiver, Receiver::Party(Party::User { .. }));
        match msg.kind {
            PayloadKind::AnchorBlock => {
                if !(user_sender && msg.receiver == Receiver::Broadcast) {
                    violations.push(Violation {
                        index,
                        rule: "anchor-flow".into(),
                        detail: "anchor blocks must flow user->broadcast".into(),
                    });
                }
            }
            PayloadKind::IntermediateData
            | PayloadKind::IntermediateAnchor
            | PayloadKind::TestIntermediate => {
                if !(user_sender && to_analyst) {
                    violations.push(Violation {
                        index,
                        rule: "intermediate-flow".into(),
                        detail: "intermediates must flow user->analyst".into(),
                    });
                }
                if let Party::User { party, .. } = msg.sender {
                    match party_widths.get(party) {
                        Some(&width) if msg.shape.1 < width => {}
                        Some(&width) => violations.push(Violation {
                            index,
                            rule: "dimension-reduction".into(),
                            detail: format!(
                                "payload has {} columns, party {party} holds {width}; \
                                 shared representations must be strictly narrower",
                                msg.shape.1
                            ),
                        }),
                        None => violations.push(Violation {
                            index,
                            rule: "dimension-reduction".into(),
                            detail: format!("unknown party index {party}"),
                        }),
                    }
                }
            }
            PayloadKind::GroundTruth => {
                if !(user_sender && to_analyst) {
                    violations.push(Violation {
                        index,
                        rule: "ground-truth-flow".into(),
                        detail: "ground truth must flow user->analyst".into(),
                    });
                }
            }
            PayloadKind::AnchorPredictions | PayloadKind::TestPredictions => {
                if !analyst_to_user {
                    violations.push(Violation {
                        index,
                        rule: "prediction-flow".into(),
                        detail: "predictions must flow analyst->user".into(),
                    });
                }
            }
        }
    }

    let mut training_steps: Vec<u8> = trace
        .iter()
        .filter(|m| {
            m.step <= 15
                && matches!(m.sender, Party::User { .. })
                && m.receiver == Receiver::Party(Party::Analyst)
        })
        .map(|m| m.step)
        .collect();
    training_steps.sort_unstable();
    training_steps.dedup();
    let training_rounds = training_steps.len();
    if training_rounds > 1 {
        violations.push(Violation {
            index: 0,
            rule: "one-path".into(),
            detail: format!("{training_rounds} user->analyst rounds during training"),
        });
    }

    AuditReport {
        passed: violations.is_empty(),
        violations,
        training_rounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{build_anchor, AnchorMethod};
    use crate::config::DimSpec;
    use crate::dataset::generate_artificial;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::artificial_preset();
        cfg.anchor.rows = 200;
        cfg.reduction.dim = DimSpec::Global(4);
        cfg
    }

    fn small_run() -> (
        PartitionedDataset,
        LabeledDataset,
        AnchorSet,
        ExperimentConfig,
    ) {
        let cfg = small_cfg();
        let (part, test) = generate_artificial(160, 3, 0.3, 1.0).unwrap();
        let anchor = build_anchor(
            &part,
            AnchorMethod::SvdPerturb,
            cfg.anchor.rows,
            0.1,
            None,
            3,
        )
        .unwrap();
        (part, test, anchor, cfg)
    }

    #[test]
    fn training_shapes_and_trace_counts() {
        let (part, _, anchor, cfg) = small_run();
        let trained = run_training(&part, &anchor, &cfg).unwrap();

        assert_eq!(trained.analyst().representation.shape(), (160, 8));
        assert_eq!(trained.analyst().collab.m_hat, 8);
        for scores in &trained.analyst().anchor_scores {
            assert_eq!(scores.shape(), (200, 2));
        }

        let count = |kind: PayloadKind| trained.trace.iter().filter(|m| m.kind == kind).count();
        assert_eq!(count(PayloadKind::IntermediateData), 4);
        assert_eq!(count(PayloadKind::IntermediateAnchor), 4);
        assert_eq!(count(PayloadKind::AnchorBlock), 4);
        assert_eq!(count(PayloadKind::GroundTruth), 2);
    }

    #[test]
    fn audit_passes_on_real_trace_and_counts_one_round() {
        let (part, test, anchor, cfg) = small_run();
        let mut trained = run_training(&part, &anchor, &cfg).unwrap();
        distill_users(&mut trained, &anchor, cfg.tree.params()).unwrap();
        let grid = part
            .partition_test(&test.x, &[test.n_samples() / 2])
            .unwrap();
        predict_test(&mut trained, &grid).unwrap();

        let report = audit_trace(&trained.trace, trained.party_widths());
        assert!(report.passed, "{:?}", report.violations);
        assert_eq!(report.training_rounds, 1);
    }

    #[test]
    fn audit_rejects_unreduced_intermediate() {
        let widths = [10, 10];
        let trace = vec![Message {
            sender: Party::User {
                institution: 0,
                party: 1,
            },
            receiver: Receiver::Party(Party::Analyst),
            kind: PayloadKind::IntermediateData,
            shape: (50, 10),
            step: 6,
        }];
        let report = audit_trace(&trace, &widths);
        assert!(!report.passed);
        assert_eq!(report.violations[0].rule, "dimension-reduction");
    }

    #[test]
    fn audit_rejects_analyst_anchor_broadcast() {
        let trace = vec![Message {
            sender: Party::Analyst,
            receiver: Receiver::Party(Party::User {
                institution: 0,
                party: 0,
            }),
            kind: PayloadKind::AnchorBlock,
            shape: (10, 5),
            step: 1,
        }];
        let report = audit_trace(&trace, &[5]);
        assert!(!report.passed);
        assert_eq!(report.violations[0].rule, "anchor-flow");
    }

    #[test]
    fn distillation_labels_and_determinism() {
        let (part, _, anchor, cfg) = small_run();
        let mut t1 = run_training(&part, &anchor, &cfg).unwrap();
        let trees1 = distill_users(&mut t1, &anchor, cfg.tree.params()).unwrap();
        let mut t2 = run_training(&part, &anchor, &cfg).unwrap();
        let trees2 = distill_users(&mut t2, &anchor, cfg.tree.params()).unwrap();
        assert_eq!(trees1, trees2);
        assert_eq!(trees1.len(), 2);
        // training messages now include one AnchorPredictions per institution
        let c = t1
            .trace
            .iter()
            .filter(|m| m.kind == PayloadKind::AnchorPredictions)
            .count();
        assert_eq!(c, 2);
    }

    #[test]
    fn prediction_on_training_rows_matches_training_representation() {
        let (part, _, anchor, cfg) = small_run();
        let mut trained = run_training(&part, &anchor, &cfg).unwrap();
        // feed the training blocks back as a "test" batch
        let grid: Vec<Vec<Matrix>> = part.blocks.clone();
        let out = predict_test(&mut trained, &grid).unwrap();
        let direct =
            predict_krr(&trained.analyst().model, &trained.analyst().representation).unwrap();
        let stacked = crate::linalg::vcat(&[out[0].0.clone(), out[1].0.clone()]).unwrap();
        assert!((stacked - direct).abs().max() < 1e-10);
    }

    #[test]
    fn empty_test_batch_is_fine() {
        let (part, _, anchor, cfg) = small_run();
        let mut trained = run_training(&part, &anchor, &cfg).unwrap();
        let grid: Vec<Vec<Matrix>> = (0..2)
            .map(|_| vec![Matrix::zeros(0, 10), Matrix::zeros(0, 10)])
            .collect();
        let out = predict_test(&mut trained, &grid).unwrap();
        assert_eq!(out[0].0.nrows(), 0);
        assert!(out[0].1.is_empty());
    }

    #[test]
    fn degenerate_single_party_pipeline_is_plain_composition() {
        // c = d = 1, PCA at full width, LS alignment: the pipeline must act
        // exactly like directly composing center -> rotate -> align -> KRR.
        let mut rng = rand::SeedableRng::seed_from_u64(8);
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        let x = Matrix::from_fn(60, 5, |_, _| rand::Rng::random_range(rng, -1.0..1.0));
        let labels: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let data = LabeledDataset::new(
            x.clone(),
            labels.clone(),
            2,
            (0..5).map(|j| format!("f{j}")).collect(),
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let part = crate::dataset::partition(&data, &[], &[]).unwrap();
        let anchor = build_anchor(&part, AnchorMethod::UniformRandom, 120, 0.0, None, 5).unwrap();

        let mut cfg = ExperimentConfig::artificial_preset();
        cfg.reduction.kind = ReductionKind::Pca;
        cfg.reduction.dim = DimSpec::Global(5); // full width
        cfg.solver = crate::collaboration::SolverKind::Ls;
        cfg.learner.gamma = GammaSpec::Fixed(0.7);
        cfg.anchor.rows = 120;

        let mut trained = run_training(&part, &anchor, &cfg).unwrap();
        let test = Matrix::from_fn(20, 5, |_, _| rand::Rng::random_range(rng, -1.0..1.0));
        let out = predict_test(&mut trained, &[vec![test.clone()]]).unwrap();

        // direct composition with independently fitted pieces
        let map = fit_pca(&x, 5).unwrap();
        let anc_int = apply_map(&map, &anchor.x_anc).unwrap();
        let (u, _) = crate::collaboration::target_subspace(std::slice::from_ref(&anc_int)).unwrap();
        let g = crate::collaboration::solve_ls(&anc_int, &u).unwrap();
        let x_hat = apply_map(&map, &x).unwrap() * &g;
        let y = one_hot(&labels, 2).unwrap();
        let model = fit_krr(&x_hat, &y, cfg.learner.lambda, 0.7).unwrap();
        let direct_scores = predict_krr(&model, &(apply_map(&map, &test).unwrap() * &g)).unwrap();

        let gap = (&out[0].0 - &direct_scores).abs().max();
        assert!(gap < 1e-10, "composition gap {gap}");

        // rotation invariance of the kernel model: a full-rank orthogonal
        // reparameterization of the inputs leaves predictions unchanged
        // when gamma is held fixed.
        let q = {
            let r = Matrix::from_fn(5, 5, |_, _| rand::Rng::random_range(rng, -1.0..1.0));
            r.qr().q()
        };
        let (xc, _) = crate::linalg::center_columns(&x);
        let m_rot = fit_krr(&(&xc * &q), &y, cfg.learner.lambda, 0.7).unwrap();
        let m_raw = fit_krr(&xc, &y, cfg.learner.lambda, 0.7).unwrap();
        let (tc, _) = crate::linalg::center_columns(&test);
        let s_rot = predict_krr(&m_rot, &(&tc * &q)).unwrap();
        let s_raw = predict_krr(&m_raw, &tc).unwrap();
        assert!((s_rot - s_raw).abs().max() < 1e-9);
    }

    #[test]
    fn trace_steps_are_nondecreasing_through_one_batch() {
        let (part, test, anchor, cfg) = small_run();
        let mut trained = run_training(&part, &anchor, &cfg).unwrap();
        distill_users(&mut trained, &anchor, cfg.tree.params()).unwrap();
        let grid = part
            .partition_test(&test.x, &[test.n_samples() / 2])
            .unwrap();
        predict_test(&mut trained, &grid).unwrap();
        for pair in trained.trace.windows(2) {
            assert!(
                pair[0].step <= pair[1].step,
                "trace out of step order: {:?} then {:?}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn trace_jsonl_roundtrip() {
        let (part, _, anchor, cfg) = small_run();
        let trained = run_training(&part, &anchor, &cfg).unwrap();
        let text = trace_to_jsonl(&trained.trace);
        let back = trace_from_jsonl(&text).unwrap();
        assert_eq!(back, trained.trace);
    }

    #[test]
    fn mismatched_anchor_boundaries_rejected() {
        let (part, _, _, cfg) = small_run();
        let (other_part, _) = generate_artificial(160, 9, 0.3, 1.0).unwrap();
        let mut bad =
            build_anchor(&other_part, AnchorMethod::SvdPerturb, 200, 0.1, None, 1).unwrap();
        bad.col_offsets = vec![0, 7, 20];
        assert!(run_training(&part, &bad, &cfg).is_err());
    }

    #[test]
    fn errors_carry_step_numbers() {
        let (part, _, anchor, mut cfg) = small_run();
        cfg.reduction.knn_k = 500; // larger than any block's sample count
        match run_training(&part, &anchor, &cfg) {
            Err(Error::Protocol { step: 3, .. }) => {}
            other => panic!("expected step-3 protocol error, got {other:?}"),
        }
    }
}
