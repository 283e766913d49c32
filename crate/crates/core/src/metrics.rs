//! Cutoff metrics (Recall@K, nDCG@K), baseline-relative deltas and binary
//! classification ratios.
//!
//! nDCG uses gain `2^rel − 1` and discount `log2(rank + 1)`. Queries without
//! any relevant judgment are left out of means and counted separately.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Qrels, RankedRun};
use crate::error::{Error, Result};

/// Per-query values and their mean for one metric at one cutoff.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricValues {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Run queries left out because they have no relevant judgment.
    pub excluded_queries: usize,
}

impl MetricValues {
    fn from_per_query(per_query: BTreeMap<String, f64>, excluded_queries: usize) -> Self {
        // BTreeMap iteration fixes the summation order.
        let mean =
            if per_query.is_empty() { 0.0 } else { per_query.values().sum::<f64>() / per_query.len() as f64 };
        MetricValues { per_query, mean, excluded_queries }
    }
}

pub fn recall_at(run: &RankedRun, qrels: &Qrels, k: usize) -> Result<MetricValues> {
    if k == 0 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, list) in run.iter() {
        let n_rel = qrels.positives(qid).len();
        if n_rel == 0 {
            excluded += 1;
            continue;
        }
        let hits = list.iter().take(k).filter(|e| qrels.is_relevant(qid, &e.video_id)).count();
        per_query.insert(qid.to_string(), hits as f64 / n_rel as f64);
    }
    Ok(MetricValues::from_per_query(per_query, excluded))
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

fn discount(position: usize) -> f64 {
    // position is 1-based
    ((position + 1) as f64).log2()
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades.enumerate().map(|(i, r)| gain(r) / discount(i + 1)).sum()
}

pub fn ndcg_at(run: &RankedRun, qrels: &Qrels, k: usize) -> Result<MetricValues> {
    if k == 0 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, list) in run.iter() {
        let mut ideal: Vec<u32> =
            qrels.query(qid).map(|m| m.values().copied().filter(|&r| r > 0).collect()).unwrap_or_default();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter().take(k));
        if idcg == 0.0 {
            excluded += 1;
            continue;
        }
        let actual = dcg(list.iter().take(k).map(|e| qrels.grade(qid, &e.video_id)));
        per_query.insert(qid.to_string(), actual / idcg);
    }
    Ok(MetricValues::from_per_query(per_query, excluded))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CutoffMetrics {
    pub recall: MetricValues,
    pub ndcg: MetricValues,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub cutoffs: BTreeMap<usize, CutoffMetrics>,
    pub query_count: usize,
    pub excluded_queries: usize,
}

impl MetricReport {
    pub fn aggregates(&self) -> AggregateScores {
        AggregateScores(self.cutoffs.iter().map(|(&k, m)| (k, (m.recall.mean, m.ndcg.mean))).collect())
    }
}

pub fn evaluate(run: &RankedRun, qrels: &Qrels, cutoffs: &[usize]) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for &k in cutoffs {
        let recall = recall_at(run, qrels, k)?;
        let ndcg = ndcg_at(run, qrels, k)?;
        report.query_count = recall.per_query.len();
        report.excluded_queries = recall.excluded_queries;
        report.cutoffs.insert(k, CutoffMetrics { recall, ndcg });
    }
    Ok(report)
}

/// Mean `(recall, ndcg)` per cutoff; the unit that delta tables compare.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AggregateScores(pub BTreeMap<usize, (f64, f64)>);

impl AggregateScores {
    /// Builds scores from the row layout `R@k1, nDCG@k1, R@k2, nDCG@k2, ...`.
    pub fn from_row(cutoffs: &[usize], row: &[f64]) -> Result<Self> {
        if row.len() != 2 * cutoffs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} cutoffs",
                row.len(),
                cutoffs.len()
            )));
        }
        Ok(AggregateScores(
            cutoffs.iter().zip(row.chunks_exact(2)).map(|(&k, pair)| (k, (pair[0], pair[1]))).collect(),
        ))
    }
}

/// Percentage change `100·(method − baseline)/baseline`; `None` when the
/// baseline is not positive.
pub fn delta_pct(baseline: f64, method: f64) -> Option<f64> {
    if baseline > 0.0 && baseline.is_finite() && method.is_finite() {
        Some(100.0 * (method - baseline) / baseline)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DeltaCell {
    Pct(f64),
    /// Method equals baseline at report precision.
    Unchanged,
    NotApplicable,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DeltaReport {
    /// `(recall delta, ndcg delta)` per cutoff.
    pub cutoffs: BTreeMap<usize, (DeltaCell, DeltaCell)>,
}

fn delta_cell(baseline: f64, method: f64) -> DeltaCell {
    match delta_pct(baseline, method) {
        None => DeltaCell::NotApplicable,
        Some(_) if format!("{baseline:.3}") == format!("{method:.3}") => DeltaCell::Unchanged,
        Some(d) => DeltaCell::Pct(d),
    }
}

pub fn delta_report(baseline: &AggregateScores, method: &AggregateScores) -> DeltaReport {
    let cutoffs = baseline
        .0
        .iter()
        .filter_map(|(k, &(br, bn))| {
            method.0.get(k).map(|&(mr, mn)| (*k, (delta_cell(br, mr), delta_cell(bn, mn))))
        })
        .collect();
    DeltaReport { cutoffs }
}

/// How [`DeltaCell::Unchanged`] cells are printed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnchangedStyle {
    /// `0.00`
    #[default]
    Zero,
    /// `N/A`, as in tables that omit deltas for unchanged cells.
    NotApplicable,
}

pub fn render_delta(cell: DeltaCell, style: UnchangedStyle) -> String {
    match (cell, style) {
        (DeltaCell::Pct(d), _) => format!("{d:+.2}"),
        (DeltaCell::Unchanged, UnchangedStyle::Zero) => "0.00".to_string(),
        (DeltaCell::Unchanged, UnchangedStyle::NotApplicable) | (DeltaCell::NotApplicable, _) => {
            "N/A".to_string()
        }
    }
}

/// Plain-text table: a header, one raw row per method (3 decimals) and an
/// optional delta row under each non-baseline method (2 decimals).
pub fn render_table(
    cutoffs: &[usize],
    rows: &[(&str, &AggregateScores)],
    baseline: Option<&AggregateScores>,
    style: UnchangedStyle,
) -> String {
    let mut header = vec!["method".to_string()];
    for k in cutoffs {
        header.push(format!("R@{k}"));
        header.push(format!("nDCG@{k}"));
    }
    let mut lines: Vec<Vec<String>> = vec![header];
    for (name, scores) in rows {
        let mut raw = vec![name.to_string()];
        for k in cutoffs {
            let (r, n) = scores.0.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
            raw.push(format!("{r:.3}"));
            raw.push(format!("{n:.3}"));
        }
        lines.push(raw);
        if let Some(base) = baseline {
            if std::ptr::eq(base, *scores) {
                continue;
            }
            let d = delta_report(base, scores);
            let mut row = vec!["  delta%".to_string()];
            for k in cutoffs {
                match d.cutoffs.get(k) {
                    Some(&(r, n)) => {
                        row.push(render_delta(r, style));
                        row.push(render_delta(n, style));
                    }
                    None => row.extend(["N/A".to_string(), "N/A".to_string()]),
                }
            }
            lines.push(row);
        }
    }
    let ncol = lines[0].len();
    let widths: Vec<usize> = (0..ncol).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for l in &lines {
        let mut s = format!("{:<w$}", l[0], w = widths[0]);
        for c in 1..ncol {
            let _ = write!(s, "  {:>w$}", l[c], w = widths[c]);
        }
        out.push_str(s.trim_end());
        out.push('\n');
    }
    out
}

/// Confusion-matrix ratios of yes/no predictions; `None` for zero denominators.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BinaryMetrics {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn binary_metrics(predictions: &[(String, String, u8)], qrels: &Qrels) -> Result<BinaryMetrics> {
    let mut m = BinaryMetrics::default();
    for (q, v, pred) in predictions {
        let Some(rel) = qrels.relevance(q, v) else {
            return Err(Error::Validation(format!("no qrels entry for ({q}, {v})")));
        };
        match (*pred == 1, rel > 0) {
            (true, true) => m.true_positive += 1,
            (true, false) => m.false_positive += 1,
            (false, false) => m.true_negative += 1,
            (false, true) => m.false_negative += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    m.accuracy = ratio(m.true_positive + m.true_negative, predictions.len());
    m.precision = ratio(m.true_positive, m.true_positive + m.false_positive);
    m.recall = ratio(m.true_positive, m.true_positive + m.false_negative);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_qrels, parse_run};

    fn setup(run: &str, qrels: &str) -> (RankedRun, Qrels) {
        (parse_run(run, "r").unwrap(), parse_qrels(qrels, "q").unwrap().0)
    }

    #[test]
    fn recall_cases() {
        let (run, qrels) = setup("q Q0 a 1 3 t\nq Q0 b 2 2 t\nq Q0 c 3 1 t\n", "q 0 a 1\nq 0 c 1\n");
        assert_eq!(recall_at(&run, &qrels, 3).unwrap().mean, 1.0);
        assert_eq!(recall_at(&run, &qrels, 2).unwrap().mean, 0.5);
    }

    #[test]
    fn ndcg_hand_example() {
        let (run, qrels) = setup("q Q0 a 1 3 t\nq Q0 b 2 2 t\nq Q0 c 3 1 t\n", "q 0 a 1\nq 0 c 1\n");
        let v = ndcg_at(&run, &qrels, 3).unwrap().mean;
        let oracle = 1.5 / (1.0 + 1.0 / 3f64.log2());
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.919721).abs() < 1e-6);
    }

    #[test]
    fn ideal_order_scores_one() {
        let (run, qrels) = setup("q Q0 a 1 3 t\nq Q0 b 2 2 t\nq Q0 c 3 1 t\n", "q 0 a 3\nq 0 b 1\nq 0 c 0\n");
        assert_eq!(ndcg_at(&run, &qrels, 10).unwrap().mean, 1.0);
    }

    #[test]
    fn queries_without_relevant_are_excluded() {
        let (run, qrels) = setup("q Q0 a 1 3 t\nz Q0 a 1 3 t\n", "q 0 a 1\nz 0 a 0\n");
        let r = recall_at(&run, &qrels, 5).unwrap();
        assert_eq!(r.excluded_queries, 1);
        assert_eq!(r.per_query.len(), 1);
        assert_eq!(ndcg_at(&run, &qrels, 5).unwrap().excluded_queries, 1);
    }

    #[test]
    fn zero_cutoff_is_error() {
        let (run, qrels) = setup("q Q0 a 1 3 t\n", "q 0 a 1\n");
        assert!(recall_at(&run, &qrels, 0).is_err());
        assert!(ndcg_at(&run, &qrels, 0).is_err());
    }

    #[test]
    fn table_one_deltas() {
        let r = |b, m| (delta_pct(b, m).unwrap() * 100.0).round() / 100.0;
        assert_eq!(r(0.523, 0.570), 8.99);
        assert_eq!(r(0.495, 0.543), 9.70);
        assert_eq!(r(0.523, 0.508), -2.87);
        assert_eq!(delta_pct(0.0, 0.3), None);
        assert_eq!(render_delta(DeltaCell::Pct(8.98661), UnchangedStyle::Zero), "+8.99");
        assert_eq!(render_delta(DeltaCell::Pct(-2.868), UnchangedStyle::Zero), "-2.87");
    }

    #[test]
    fn unchanged_and_undefined_cells() {
        assert_eq!(delta_cell(0.749, 0.749), DeltaCell::Unchanged);
        assert_eq!(delta_cell(0.0, 0.5), DeltaCell::NotApplicable);
        assert_eq!(render_delta(DeltaCell::Unchanged, UnchangedStyle::Zero), "0.00");
        assert_eq!(render_delta(DeltaCell::Unchanged, UnchangedStyle::NotApplicable), "N/A");
    }

    #[test]
    fn binary_metrics_cases() {
        let (_, qrels) =
            setup("", &(0..10).map(|i| format!("q 0 v{i} {}\n", u32::from(i == 0))).collect::<String>());
        let all_yes: Vec<_> = (0..10).map(|i| ("q".to_string(), format!("v{i}"), 1)).collect();
        let m = binary_metrics(&all_yes, &qrels).unwrap();
        assert_eq!(m.precision, Some(0.1));
        assert_eq!(m.recall, Some(1.0));
        let perfect: Vec<_> = (0..10).map(|i| ("q".to_string(), format!("v{i}"), u8::from(i == 0))).collect();
        assert_eq!(binary_metrics(&perfect, &qrels).unwrap().accuracy, Some(1.0));
        let all_no: Vec<_> = (1..10).map(|i| ("q".to_string(), format!("v{i}"), 0)).collect();
        let m = binary_metrics(&all_no, &qrels).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert!(binary_metrics(&[("q".into(), "zz".into(), 1)], &qrels).is_err());
    }

    #[test]
    fn mixed_confusion_matrix() {
        let (_, qrels) = setup("", "q 0 a 1\nq 0 b 1\nq 0 c 0\nq 0 d 0\nq 0 e 1\nq 0 f 0\n");
        // a:TP b:FN c:FP d:TN e:TP f:FP
        let preds: Vec<_> = [("a", 1), ("b", 0), ("c", 1), ("d", 0), ("e", 1), ("f", 1)]
            .iter()
            .map(|(v, p)| ("q".to_string(), v.to_string(), *p))
            .collect();
        let m = binary_metrics(&preds, &qrels).unwrap();
        assert_eq!((m.true_positive, m.false_negative, m.false_positive, m.true_negative), (2, 1, 2, 1));
        assert_eq!(m.accuracy, Some(3.0 / 6.0));
        assert_eq!(m.precision, Some(2.0 / 4.0));
        assert_eq!(m.recall, Some(2.0 / 3.0));
    }
}
