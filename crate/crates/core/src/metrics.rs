//! Recall, precision and F1 of findings against labeled sinks.

use std::collections::BTreeSet;
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::lang::VulnExample;
use crate::scan::Finding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub vuln_type: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp_total: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl MetricsRow {
    /// Row from counts; ratios are 0 where their denominator is 0.
    pub fn from_counts(vuln_type: impl Into<String>, tp: u64, fp: u64, tp_total: u64) -> Self {
        let ratio = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
        let recall = ratio(tp as f64, tp_total as f64);
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        MetricsRow {
            vuln_type: vuln_type.into(),
            tp,
            fp,
            fn_: tp_total.saturating_sub(tp),
            tp_total,
            recall,
            precision,
            f1,
        }
    }
}

/// Unweighted means of the per-type ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    /// Counts summed over types before taking ratios.
    pub overall: MetricsRow,
    pub macro_average: MacroAverage,
}

/// Whether `file` (a scanned path) names the label's file: the label's
/// `project_dir/sink_file` components must be a suffix of its components.
fn same_file(file: &str, label: &VulnExample) -> bool {
    let want: Vec<&str> = label
        .project_dir
        .split('/')
        .chain(label.sink_file.split('/'))
        .filter(|c| !c.is_empty() && *c != ".")
        .collect();
    let have: Vec<&str> = file.split('/').filter(|c| !c.is_empty() && *c != ".").collect();
    have.ends_with(&want)
}

fn hits(f: &Finding, l: &VulnExample) -> bool {
    f.vuln_type == l.vuln_type && f.line >= l.sink_lines.0 && f.line <= l.sink_lines.1 && same_file(&f.file, l)
}

/// A finding inside a label of its type is a true positive for that label;
/// each label counts once. Other findings are false positives; unmatched
/// labels are false negatives.
pub fn compute_metrics(findings: &[Finding], labels: &[VulnExample]) -> MetricsReport {
    let types: BTreeSet<&str> = labels
        .iter()
        .map(|l| l.vuln_type.as_str())
        .chain(findings.iter().map(|f| f.vuln_type.as_str()))
        .collect();
    let rows: Vec<MetricsRow> = types
        .into_iter()
        .map(|t| {
            let ls: Vec<&VulnExample> = labels.iter().filter(|l| l.vuln_type == t).collect();
            let fs: Vec<&Finding> = findings.iter().filter(|f| f.vuln_type == t).collect();
            let tp = ls.iter().filter(|l| fs.iter().any(|f| hits(f, l))).count() as u64;
            let fp = fs.iter().filter(|f| !ls.iter().any(|l| hits(f, l))).count() as u64;
            MetricsRow::from_counts(t, tp, fp, ls.len() as u64)
        })
        .collect();
    let sum = |f: fn(&MetricsRow) -> u64| rows.iter().map(f).sum::<u64>();
    let overall = MetricsRow::from_counts("overall", sum(|r| r.tp), sum(|r| r.fp), sum(|r| r.tp_total));
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let macro_average = MacroAverage {
        recall: mean(|r| r.recall),
        precision: mean(|r| r.precision),
        f1: mean(|r| r.f1),
    };
    MetricsReport {
        rows,
        overall,
        macro_average,
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>5} {:>5} {:>8} {:>7} {:>9} {:>6}",
            "type", "TP", "FP", "FN", "TP_total", "recall", "precision", "f1"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(
                out,
                "{:<24} {:>5} {:>5} {:>5} {:>8} {:>7.3} {:>9.3} {:>6.3}",
                r.vuln_type, r.tp, r.fp, r.fn_, r.tp_total, r.recall, r.precision, r.f1
            );
        }
        let m = &self.macro_average;
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>5} {:>5} {:>8} {:>7.3} {:>9.3} {:>6.3}",
            "macro-average", "", "", "", "", m.recall, m.precision, m.f1
        );
        f.write_str(&out)
    }
}
