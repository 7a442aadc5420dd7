//! CART decision trees for the interpretable per-institution surrogates.
//!
//! Greedy binary splits on Gini impurity with exhaustive threshold search
//! at midpoints of consecutive distinct feature values. Ties are broken
//! toward the lower feature index, then the lower threshold, so a fit is a
//! pure function of the (multi)set of training rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Routing rule: go left iff `row[feature] <= threshold`.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class_counts: Vec<usize>,
        predicted_class: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` removes the depth cap.
    pub max_depth: Option<usize>,
    /// Minimum samples on each side of a split.
    pub min_leaf: usize,
    /// A split must lower the weighted Gini impurity by at least this much.
    pub min_impurity_decrease: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(10),
            min_leaf: 5,
            min_impurity_decrease: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root; children reference array indices.
    pub nodes: Vec<Node>,
    pub params: TreeParams,
    pub n_features: usize,
    pub class_count: usize,
}

impl DecisionTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Distinct feature indices used by internal nodes.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

struct Builder<'a> {
    x: &'a Matrix,
    labels: &'a [usize],
    class_count: usize,
    params: TreeParams,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
    left_idx: Vec<usize>,
    right_idx: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0usize; self.class_count];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: Vec<usize>) -> usize {
        let predicted_class = counts
            .iter()
            .enumerate()
            .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.nodes.push(Node::Leaf {
            class_counts: counts,
            predicted_class,
        });
        self.nodes.len() - 1
    }

    fn best_split(&self, idx: &[usize], parent_gini: f64) -> Option<Split> {
        let n = idx.len();
        let nf = n as f64;
        let mut best: Option<Split> = None;

        for feature in 0..self.x.ncols() {
            let mut order: Vec<usize> = idx.to_vec();
            order.sort_by(|&a, &b| {
                self.x[(a, feature)]
                    .partial_cmp(&self.x[(b, feature)])
                    .unwrap()
            });

            let mut left_counts = vec![0usize; self.class_count];
            let right_total = self.counts(idx);
            let mut right_counts = right_total;
            for k in 1..n {
                let moved = order[k - 1];
                left_counts[self.labels[moved]] += 1;
                right_counts[self.labels[moved]] -= 1;

                let prev = self.x[(order[k - 1], feature)];
                let cur = self.x[(order[k], feature)];
                if prev == cur {
                    continue;
                }
                if k < self.params.min_leaf || n - k < self.params.min_leaf {
                    continue;
                }
                let weighted = (k as f64 * gini(&left_counts, k)
                    + (n - k) as f64 * gini(&right_counts, n - k))
                    / nf;
                let decrease = parent_gini - weighted;
                let better = match &best {
                    None => true,
                    Some(b) => decrease > b.decrease,
                };
                if better && decrease >= self.params.min_impurity_decrease {
                    best = Some(Split {
                        feature,
                        threshold: prev + (cur - prev) / 2.0,
                        decrease,
                        left_idx: order[..k].to_vec(),
                        right_idx: order[k..].to_vec(),
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let node_gini = gini(&counts, idx.len());

        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if depth_reached || node_gini == 0.0 || idx.len() < 2 * self.params.min_leaf.max(1) {
            return self.leaf(counts);
        }
        let Some(split) = self.best_split(idx, node_gini) else {
            return self.leaf(counts);
        };

        let at = self.nodes.len();
        self.nodes.push(Node::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(&split.left_idx, depth + 1);
        let right = self.build(&split.right_idx, depth + 1);
        if let Node::Internal {
            left: l, right: r, ..
        } = &mut self.nodes[at]
        {
            *l = left;
            *r = right;
        }
        at
    }
}

/// Fit a CART classifier. `class_count` fixes the width of the leaf count
/// vectors even when some classes are absent from `labels`.
pub fn fit_tree(
    x: &Matrix,
    labels: &[usize],
    class_count: usize,
    params: TreeParams,
) -> Result<DecisionTree> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if labels.len() != x.nrows() {
        return Err(Error::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    if class_count == 0 {
        return Err(Error::invalid("class_count must be positive"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::invalid(format!(
            "label {bad} out of range 0..{class_count}"
        )));
    }
    if params.min_leaf == 0 {
        return Err(Error::invalid("min_leaf must be at least 1"));
    }

    let mut builder = Builder {
        x,
        labels,
        class_count,
        params,
        nodes: Vec::new(),
    };
    let idx: Vec<usize> = (0..x.nrows()).collect();
    let root = builder.build(&idx, 0);
    debug_assert_eq!(root, 0);

    Ok(DecisionTree {
        nodes: builder.nodes,
        params,
        n_features: x.ncols(),
        class_count,
    })
}

/// Route each row through the tree; exact `<=` comparisons at thresholds.
pub fn predict_tree(tree: &DecisionTree, x: &Matrix) -> Result<Vec<usize>> {
    if x.ncols() != tree.n_features {
        return Err(Error::invalid(format!(
            "tree expects {} features, got {}",
            tree.n_features,
            x.ncols()
        )));
    }
    Ok((0..x.nrows())
        .map(|i| {
            let mut at = 0usize;
            loop {
                match &tree.nodes[at] {
                    Node::Leaf {
                        predicted_class, ..
                    } => return *predicted_class,
                    Node::Internal {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        at = if x[(i, *feature)] <= *threshold {
                            *left
                        } else {
                            *right
                        };
                    }
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    IndentedText,
    Dot,
}

/// Render the tree. Text puts one node per line with two-space depth
/// indentation; DOT emits a digraph whose node labels match the text lines.
pub fn export_tree(
    tree: &DecisionTree,
    feature_names: &[String],
    format: TreeFormat,
) -> Result<String> {
    if feature_names.len() != tree.n_features {
        return Err(Error::invalid(format!(
            "{} feature names for {} features",
            feature_names.len(),
            tree.n_features
        )));
    }

    let label = |at: usize| -> String {
        match &tree.nodes[at] {
            Node::Internal {
                feature, threshold, ..
            } => format!("{} <= {}", feature_names[*feature], threshold),
            Node::Leaf {
                class_counts,
                predicted_class,
            } => {
                let counts = class_counts
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("leaf: class {predicted_class} ({counts})")
            }
        }
    };

    match format {
        TreeFormat::IndentedText => {
            let mut out = String::new();
            fn walk(
                tree: &DecisionTree,
                label: &dyn Fn(usize) -> String,
                at: usize,
                depth: usize,
                out: &mut String,
            ) {
                out.push_str(&"  ".repeat(depth));
                out.push_str(&label(at));
                out.push('\n');
                if let Node::Internal { left, right, .. } = &tree.nodes[at] {
                    walk(tree, label, *left, depth + 1, out);
                    walk(tree, label, *right, depth + 1, out);
                }
            }
            walk(tree, &label, 0, 0, &mut out);
            Ok(out)
        }
        TreeFormat::Dot => {
            let mut out = String::from("digraph decision_tree {\n  node [shape=box];\n");
            for at in 0..tree.nodes.len() {
                let text = label(at).replace('"', "\\\"");
                out.push_str(&format!("  n{at} [label=\"{text}\"];\n"));
            }
            for (at, node) in tree.nodes.iter().enumerate() {
                if let Node::Internal { left, right, .. } = node {
                    out.push_str(&format!("  n{at} -> n{left} [label=\"yes\"];\n"));
                    out.push_str(&format!("  n{at} -> n{right} [label=\"no\"];\n"));
                }
            }
            out.push_str("}\n");
            Ok(out)
        }
    }
}
