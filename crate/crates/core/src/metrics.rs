//! Evaluation: accuracy, normalized mutual information, fidelity to the
//! centralized baseline, and mean/standard-error aggregation over trials.
//!
//! NMI uses natural-log entropies and the geometric-mean normalization
//! `I(a;b) / sqrt(H(a) H(b))`. Degenerate partitions follow two fixed
//! conventions: both sides single-cluster gives 1, exactly one side
//! single-cluster gives 0. Sums are accumulated over sorted term lists so
//! `nmi(a, b) == nmi(b, a)` holds exactly, not just approximately.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Percentage of positions where the two label vectors agree.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty prediction vector"));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Order-independent sum: sorting the terms first makes the result a
/// function of the term multiset alone.
fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    terms.iter().sum()
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    let terms: Vec<f64> = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .collect();
    stable_sum(terms)
}

/// Normalized mutual information between two labelings of the same items.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty label vector"));
    }
    let n = a.len() as f64;

    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }

    let ha = entropy(&ca, n);
    let hb = entropy(&cb, n);
    match (ha == 0.0, hb == 0.0) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }

    let mi_terms: Vec<f64> = joint
        .iter()
        .map(|(&(x, y), &nxy)| {
            let pxy = nxy as f64 / n;
            pxy * ((n * nxy as f64) / ((ca[&x] * cb[&y]) as f64)).ln()
        })
        .collect();
    let mi = stable_sum(mi_terms);
    Ok((mi / (ha * hb).sqrt()).max(0.0))
}

/// Fidelity to centralized analysis: NMI between a method's predictions and
/// the centralized predictions on the same test rows.
pub fn fidelity_to_ca(pred_method: &[usize], pred_ca: &[usize]) -> Result<f64> {
    nmi(pred_method, pred_ca)
}

/// One trial's metric row for one method.
#[derive(Debug, Clone, Copy)]
pub struct TrialMetrics {
    pub nmi: f64,
    pub acc_percent: f64,
    /// Absent exactly for the centralized method itself.
    pub fidelity_to_ca: Option<f64>,
}

/// Mean and standard error over trials. The standard error is absent for a
/// single trial (a sample standard deviation needs at least two).
#[derive(Debug, Clone, Copy)]
pub struct Summary {
    pub mean: f64,
    pub std_error: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::invalid("no trials to aggregate"));
    }
    let n = values.len() as f64;
    let mean = stable_sum(values.to_vec()) / n;
    if values.len() == 1 {
        return Ok(Summary {
            mean,
            std_error: None,
        });
    }
    let var_terms: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let sample_var = stable_sum(var_terms) / (n - 1.0);
    Ok(Summary {
        mean,
        std_error: Some((sample_var / n).sqrt()),
    })
}

/// Per-method aggregate over trials.
#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: String,
    pub trials: Vec<TrialMetrics>,
    pub nmi: Summary,
    pub acc: Summary,
    pub fidelity: Option<Summary>,
}

/// Aggregate one method's trial rows into mean and standard error.
pub fn aggregate(method: &str, trials: &[TrialMetrics]) -> Result<MethodReport> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials to aggregate"));
    }
    let nmi = summarize(&trials.iter().map(|t| t.nmi).collect::<Vec<_>>())?;
    let acc = summarize(&trials.iter().map(|t| t.acc_percent).collect::<Vec<_>>())?;
    let fid_values: Vec<f64> = trials.iter().filter_map(|t| t.fidelity_to_ca).collect();
    let fidelity = if fid_values.is_empty() {
        None
    } else if fid_values.len() == trials.len() {
        Some(summarize(&fid_values)?)
    } else {
        return Err(Error::invalid(format!(
            "method {method}: fidelity present for {} of {} trials",
            fid_values.len(),
            trials.len()
        )));
    };
    Ok(MethodReport {
        method: method.to_string(),
        trials: trials.to_vec(),
        nmi,
        acc,
        fidelity,
    })
}

/// Full comparison report: one entry per method, fixed order.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub methods: Vec<MethodReport>,
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

impl MetricsReport {
    /// One row per method x trial, then `mean` (and `stderr` when defined)
    /// rows. Deterministic formatting, so identical runs serialize
    /// byte-identically.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,trial,nmi,acc_percent,fidelity_to_ca\n");
        for m in &self.methods {
            for (t, row) in m.trials.iter().enumerate() {
                let fid = row.fidelity_to_ca.map(fmt6).unwrap_or_default();
                out.push_str(&format!(
                    "{},{t},{},{},{fid}\n",
                    m.method,
                    fmt6(row.nmi),
                    fmt6(row.acc_percent)
                ));
            }
        }
        for m in &self.methods {
            let fid_mean = m.fidelity.map(|s| fmt6(s.mean)).unwrap_or_default();
            out.push_str(&format!(
                "{},mean,{},{},{fid_mean}\n",
                m.method,
                fmt6(m.nmi.mean),
                fmt6(m.acc.mean)
            ));
            if let (Some(se_nmi), Some(se_acc)) = (m.nmi.std_error, m.acc.std_error) {
                let fid_se = m
                    .fidelity
                    .and_then(|s| s.std_error)
                    .map(fmt6)
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},stderr,{},{},{fid_se}\n",
                    m.method,
                    fmt6(se_nmi),
                    fmt6(se_acc)
                ));
            }
        }
        out
    }

    /// Human-readable aligned table, `mean +- stderr` per cell.
    pub fn to_table(&self) -> String {
        fn cell(s: Option<Summary>) -> String {
            match s {
                None => "--".to_string(),
                Some(Summary {
                    mean,
                    std_error: None,
                }) => format!("{mean:.2}"),
                Some(Summary {
                    mean,
                    std_error: Some(se),
                }) => format!("{mean:.2} +- {se:.2}"),
            }
        }
        let mut rows = vec![[
            "Method".to_string(),
            "NMI".to_string(),
            "ACC".to_string(),
            "Fidelity to CA".to_string(),
        ]];
        for m in &self.methods {
            rows.push([
                m.method.clone(),
                cell(Some(m.nmi)),
                cell(Some(m.acc)),
                cell(m.fidelity),
            ]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap())
            .collect();
        let mut out = String::new();
        for (k, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| format!("{v:<width$}", width = widths[c]))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if k == 0 {
                let total = widths.iter().sum::<usize>() + 2 * 3;
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}
