//! Recall@k over ranked lists and before/after comparison reports.
//!
//! Every query has exactly one relevant gallery item, so Recall@k is the
//! fraction of queries whose relevant item appears among their first `k`
//! entries.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::RankedList;
use crate::text::Header;

/// Configuration echoed into a report so that runs can be told apart.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sca_policy: Option<String>,
}

impl RunEcho {
    /// Picks the known keys out of a ranked-list or resolved-list header.
    pub fn from_header(h: &Header) -> Self {
        let sca_policy = h.get("sca_depth").map(|depth| {
            format!(
                "depth={depth},max_rounds={},gate={}",
                h.get("sca_max_rounds").unwrap_or("n"),
                h.get("sca_gate").unwrap_or("off")
            )
        });
        Self {
            seed: h.get("seed").and_then(|v| v.parse().ok()),
            temperature: h.get("temperature").and_then(|v| v.parse().ok()),
            lambda_match: h.get("lambda_match").and_then(|v| v.parse().ok()),
            sca_policy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub k: usize,
    pub hits: usize,
    pub recall: f64,
    /// `100 * recall` rounded to two decimals.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n_queries: usize,
    pub k_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub config: RunEcho,
    pub recall: Vec<RecallAt>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|r| r.k == k).map(|r| r.recall)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset {} ({} queries)", self.dataset, self.n_queries)?;
        for r in &self.recall {
            writeln!(f, "R@{}\t{:.2}\t({}/{})", r.k, 100.0 * r.recall, r.hits, self.n_queries)?;
        }
        Ok(())
    }
}

/// Recall@k for every `k` in `ks`. Lists may come straight from search or
/// from a conflict resolution (whose entry 0 is the final assignment).
pub fn recall_at_k(
    lists: &[RankedList],
    ground_truth: &BTreeMap<usize, usize>,
    ks: &[usize],
    dataset: &str,
    config: RunEcho,
) -> Result<EvalReport> {
    let mut k_values = ks.to_vec();
    k_values.sort_unstable();
    k_values.dedup();
    if k_values.is_empty() || k_values[0] == 0 {
        return Err(Error::InvalidConfig("k values must be positive and non-empty".into()));
    }
    if lists.is_empty() {
        return Err(Error::InvalidConfig("no ranked lists to evaluate".into()));
    }
    let k_max = *k_values.last().unwrap();
    let mut first_hit = Vec::with_capacity(lists.len());
    for list in lists {
        let relevant = *ground_truth
            .get(&list.query_id)
            .ok_or(Error::MissingGroundTruth(list.query_id))?;
        if k_max > list.len() {
            return Err(Error::KExceedsDepth {
                k: k_max,
                depth: list.len(),
            });
        }
        first_hit.push(list.position_of(relevant));
    }
    let n = lists.len();
    let recall = k_values
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|p| p.is_some_and(|p| p <= k)).count();
            let recall = hits as f64 / n as f64;
            RecallAt {
                k,
                hits,
                recall,
                percent: round2(100.0 * recall),
            }
        })
        .collect();
    Ok(EvalReport {
        dataset: dataset.to_string(),
        n_queries: n,
        k_values,
        timestamp: None,
        config,
        recall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub k: usize,
    pub before: f64,
    pub after: f64,
    /// `after - before`
    pub delta: f64,
    /// `delta / before`; absent when `before` is zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative: Option<f64>,
    pub regression: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub dataset: String,
    pub before_label: String,
    pub after_label: String,
    pub rows: Vec<DeltaRow>,
}

impl DeltaReport {
    pub fn delta_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k).map(|r| r.delta)
    }

    pub fn has_regression(&self) -> bool {
        self.rows.iter().any(|r| r.regression)
    }

    pub fn with_labels(mut self, before: &str, after: &str) -> Self {
        self.before_label = before.to_string();
        self.after_label = after.to_string();
        self
    }

    /// Aligned plain-text table with percentages to two decimals.
    pub fn render_table(&self) -> String {
        let width = ["Method", "delta", &self.before_label, &self.after_label]
            .iter()
            .map(|s| s.len())
            .max()
            .unwrap_or(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Method");
        for r in &self.rows {
            let _ = write!(out, "{:>8}", format!("R@{}", r.k));
        }
        out.push('\n');
        let mut line = |label: &str, cells: Vec<String>| {
            let _ = write!(out, "{label:<width$}");
            for c in cells {
                let _ = write!(out, "{c:>8}");
            }
            out.push('\n');
        };
        line(&self.before_label, self.rows.iter().map(|r| format!("{:.2}", 100.0 * r.before)).collect());
        line(&self.after_label, self.rows.iter().map(|r| format!("{:.2}", 100.0 * r.after)).collect());
        line("delta", self.rows.iter().map(|r| format!("{:+.2}", 100.0 * r.delta)).collect());
        out
    }
}

/// Per-k differences `after - before`. Both reports must cover the same
/// dataset and k values.
pub fn compare_reports(before: &EvalReport, after: &EvalReport) -> Result<DeltaReport> {
    if before.dataset != after.dataset {
        return Err(Error::MismatchedRuns(format!(
            "datasets differ: {} vs {}",
            before.dataset, after.dataset
        )));
    }
    if before.k_values != after.k_values {
        return Err(Error::MismatchedRuns(format!(
            "k values differ: {:?} vs {:?}",
            before.k_values, after.k_values
        )));
    }
    let rows = before
        .recall
        .iter()
        .zip(&after.recall)
        .map(|(b, a)| {
            let delta = a.recall - b.recall;
            DeltaRow {
                k: b.k,
                before: b.recall,
                after: a.recall,
                delta,
                relative: (b.recall != 0.0).then(|| delta / b.recall),
                regression: delta < 0.0,
            }
        })
        .collect();
    Ok(DeltaReport {
        dataset: before.dataset.clone(),
        before_label: "before".into(),
        after_label: "after".into(),
        rows,
    })
}
