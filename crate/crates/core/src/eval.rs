// SPDX-License-Identifier: MIT OR Apache-2.0

//! Threshold-agnostic evaluation: Top-1 hit with tolerance, α-quantile
//! detection, and aggregation across datasets.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TimeSeriesRecord;
use crate::scoring::ScoreSeries;

pub const DEFAULT_TOLERANCE: u64 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no defined scores in the test region of {0}")]
    NoDefinedScores(String),
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("nothing to aggregate")]
    EmptyResults,
    #[error("unknown sweep axis {0:?} (expected layer, reference_patch, coreset_size, distance or ttamb)")]
    UnknownAxis(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub tolerance: u64,
    pub alphas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            alphas: vec![0.03, 0.10],
        }
    }
}

/// Stable map key for an α value: two decimals when exact, else shortest form.
pub fn alpha_key(alpha: f64) -> String {
    let fixed = format!("{alpha:.2}");
    if fixed.parse::<f64>() == Ok(alpha) {
        fixed
    } else {
        alpha.to_string()
    }
}

fn within_tolerance(t: u64, record: &TimeSeriesRecord, tolerance: u64) -> bool {
    let lo = (record.anomaly_begin as u64).saturating_sub(tolerance);
    let hi = record.anomaly_end as u64 + tolerance;
    (lo..=hi).contains(&t)
}

/// Defined scores at or after `train_end`.
fn test_scores<'a>(scores: &'a ScoreSeries, record: &'a TimeSeriesRecord) -> impl Iterator<Item = (u64, f64)> + 'a {
    let start = record.train_end as u64;
    scores.defined().filter(move |&(t, _)| t >= start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Top1 {
    pub argmax_time: u64,
    pub hit: bool,
}

/// Highest-scoring test time (earliest on ties) and whether it lands in
/// `[a - Δ, b + Δ]`.
pub fn top1(scores: &ScoreSeries, record: &TimeSeriesRecord, tolerance: u64) -> Result<Top1, EvalError> {
    let mut best: Option<(u64, f64)> = None;
    for (t, s) in test_scores(scores, record) {
        // BTreeMap iterates in time order, so strict > keeps the earliest maximum.
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((t, s));
        }
    }
    let (argmax_time, _) = best.ok_or_else(|| EvalError::NoDefinedScores(record.name.clone()))?;
    Ok(Top1 {
        argmax_time,
        hit: within_tolerance(argmax_time, record, tolerance),
    })
}

/// Number of candidates for quantile `alpha` out of `n` scores: ⌈α·n⌉, at least 1.
pub fn quantile_count(alpha: f64, n: usize) -> usize {
    let x = alpha * n as f64;
    // α is normally a short decimal; absorb its binary representation error.
    let k = (x - 1e-9 * x.max(1.0)).ceil() as usize;
    k.clamp(1, n.max(1))
}

/// Whether any of the top ⌈α·n⌉ test scores falls in the padded anomaly interval.
pub fn alpha_quantile(
    scores: &ScoreSeries,
    record: &TimeSeriesRecord,
    alpha: f64,
    tolerance: u64,
) -> Result<bool, EvalError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(EvalError::InvalidAlpha(alpha));
    }
    let mut ranked: Vec<(u64, f64)> = test_scores(scores, record).collect();
    if ranked.is_empty() {
        return Err(EvalError::NoDefinedScores(record.name.clone()));
    }
    let k = quantile_count(alpha, ranked.len());
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked[..k].iter().any(|&(t, _)| within_tolerance(t, record, tolerance)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub name: String,
    pub top1_hit: bool,
    pub argmax_time: u64,
    pub alpha_hits: BTreeMap<String, bool>,
    pub bank_size_before: usize,
    pub bank_size_after: usize,
    pub reduction_ratio: f64,
    pub insertion_count: usize,
}

impl DatasetResult {
    pub fn reduction_ratio(before: usize, after: usize) -> f64 {
        if before == 0 {
            0.0
        } else {
            1.0 - after as f64 / before as f64
        }
    }
}

/// Evaluates one dataset's scores.
pub fn evaluate(
    scores: &ScoreSeries,
    record: &TimeSeriesRecord,
    config: &EvalConfig,
) -> Result<(Top1, BTreeMap<String, bool>), EvalError> {
    let top = top1(scores, record, config.tolerance)?;
    let alpha_hits = config
        .alphas
        .iter()
        .map(|&a| alpha_quantile(scores, record, a, config.tolerance).map(|hit| (alpha_key(a), hit)))
        .collect::<Result<_, _>>()?;
    Ok((top, alpha_hits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedDataset {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub top1_accuracy_pct: f64,
    pub datasets: usize,
    pub hits: usize,
    pub per_dataset: Vec<DatasetResult>,
    pub alpha_counts: BTreeMap<String, usize>,
    pub mean_reduction_ratio: f64,
    pub insertion_count: usize,
    #[serde(default)]
    pub failed: Vec<FailedDataset>,
    #[serde(default)]
    pub config_echo: BTreeMap<String, String>,
}

/// Aggregates per-dataset results. The output is independent of input order.
pub fn aggregate(results: &[DatasetResult]) -> Result<Report, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut per_dataset = results.to_vec();
    per_dataset.sort_by(|a, b| a.name.cmp(&b.name));
    let n = per_dataset.len();
    let hits = per_dataset.iter().filter(|r| r.top1_hit).count();
    let mut alpha_counts = BTreeMap::new();
    for r in &per_dataset {
        for (k, &hit) in &r.alpha_hits {
            *alpha_counts.entry(k.clone()).or_insert(0) += usize::from(hit);
        }
    }
    let mean_reduction_ratio = per_dataset.iter().map(|r| r.reduction_ratio).sum::<f64>() / n as f64;
    Ok(Report {
        top1_accuracy_pct: 100.0 * hits as f64 / n as f64,
        datasets: n,
        hits,
        alpha_counts,
        mean_reduction_ratio,
        insertion_count: per_dataset.iter().map(|r| r.insertion_count).sum(),
        per_dataset,
        failed: Vec::new(),
        config_echo: BTreeMap::new(),
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self.per_dataset.iter().map(|r| r.name.len()).max().unwrap_or(4).max(7);
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>9}  {:>9}  {:>8}",
            "dataset", "top1", "argmax", "reduction", "inserted"
        );
        for r in &self.per_dataset {
            let _ = writeln!(
                out,
                "{:<width$}  {:>5}  {:>9}  {:>9.4}  {:>8}",
                r.name,
                if r.top1_hit { "hit" } else { "miss" },
                r.argmax_time,
                r.reduction_ratio,
                r.insertion_count
            );
        }
        for f in &self.failed {
            let _ = writeln!(out, "{:<width$}  FAILED: {}", f.name, f.error);
        }
        let _ = writeln!(
            out,
            "\nTop-1 accuracy: {:.1}% ({}/{})",
            self.top1_accuracy_pct, self.hits, self.datasets
        );
        for (alpha, count) in &self.alpha_counts {
            let _ = writeln!(out, "alpha {alpha}: {count} detected");
        }
        let _ = writeln!(out, "mean reduction ratio: {:.4}", self.mean_reduction_ratio);
        out
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Layer,
    ReferencePatch,
    CoresetSize,
    Distance,
    Ttamb,
}

impl SweepAxis {
    /// Config key the axis overrides.
    pub fn config_key(&self) -> &'static str {
        match self {
            SweepAxis::Layer => "layer",
            SweepAxis::ReferencePatch => "reference_patch",
            SweepAxis::CoresetSize => "coreset",
            SweepAxis::Distance => "distance",
            SweepAxis::Ttamb => "ttamb",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Layer => "layer",
            SweepAxis::ReferencePatch => "reference_patch",
            SweepAxis::CoresetSize => "coreset_size",
            SweepAxis::Distance => "distance",
            SweepAxis::Ttamb => "ttamb",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "layer" => SweepAxis::Layer,
            "reference_patch" | "patch" | "position" => SweepAxis::ReferencePatch,
            "coreset_size" | "coreset" => SweepAxis::CoresetSize,
            "distance" => SweepAxis::Distance,
            "ttamb" => SweepAxis::Ttamb,
            other => return Err(EvalError::UnknownAxis(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: String,
    pub report: Report,
}

/// Plot-ready `value,top1` CSV.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("value,top1\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.value, p.report.top1_accuracy_pct);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(a: usize, b: usize) -> TimeSeriesRecord {
        TimeSeriesRecord::new("r", vec![0.0; 2000], 100, a, b).unwrap()
    }

    fn series(pairs: &[(u64, f64)]) -> ScoreSeries {
        ScoreSeries::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn top1_boundaries() {
        let rec = record(500, 600);
        let hit = top1(&series(&[(450, 1.0), (800, 0.5)]), &rec, 100).unwrap();
        assert_eq!(
            hit,
            Top1 {
                argmax_time: 450,
                hit: true
            }
        );
        assert!(top1(&series(&[(400, 1.0)]), &rec, 100).unwrap().hit);
        assert!(!top1(&series(&[(399, 1.0)]), &rec, 100).unwrap().hit);
        assert!(top1(&series(&[(700, 1.0)]), &rec, 100).unwrap().hit);
        assert!(!top1(&series(&[(701, 1.0)]), &rec, 100).unwrap().hit);
    }

    #[test]
    fn top1_earliest_tie() {
        let rec = record(500, 600);
        let s = series(&[(110, 0.5), (111, 0.9), (112, 0.9)]);
        assert_eq!(top1(&s, &rec, 100).unwrap().argmax_time, 111);
    }

    #[test]
    fn top1_ignores_train_and_undefined() {
        let rec = record(500, 600);
        let mut s = series(&[(50, 99.0), (550, 1.0)]);
        s.mark_undefined(100..2000);
        assert_eq!(top1(&s, &rec, 0).unwrap().argmax_time, 550);
        let mut empty = ScoreSeries::default();
        empty.mark_undefined(100..200);
        assert!(matches!(top1(&empty, &rec, 100), Err(EvalError::NoDefinedScores(_))));
    }

    #[test]
    fn quantile_counts() {
        assert_eq!(quantile_count(0.03, 1000), 30);
        assert_eq!(quantile_count(0.10, 1000), 100);
        assert_eq!(quantile_count(0.001, 100), 1);
        assert_eq!(quantile_count(1.0, 7), 7);
        assert_eq!(quantile_count(0.5, 3), 2);
    }

    #[test]
    fn alpha_full_quantile() {
        let rec = record(500, 600);
        let s = series(&[(200, 9.0), (300, 8.0), (650, 0.1)]);
        assert!(alpha_quantile(&s, &rec, 1.0, 100).unwrap());
        assert!(!alpha_quantile(&s, &rec, 0.5, 100).unwrap());
        assert!(alpha_quantile(&s, &rec, 0.0, 100).is_err());
    }

    #[test]
    fn alpha_single_candidate() {
        // 100 defined scores, one inside the window; α = 0.001 → k = 1.
        let rec = record(500, 600);
        let mut pairs: Vec<(u64, f64)> = (0..100).map(|i| (1000 + i, i as f64 * 0.01)).collect();
        pairs[0] = (550, 0.5);
        assert!(!alpha_quantile(&series(&pairs), &rec, 0.001, 100).unwrap());
        pairs[0] = (550, 5.0);
        assert!(alpha_quantile(&series(&pairs), &rec, 0.001, 100).unwrap());
    }

    fn result(name: &str, hit: bool, alpha: bool, ratio: f64) -> DatasetResult {
        DatasetResult {
            name: name.into(),
            top1_hit: hit,
            argmax_time: 0,
            alpha_hits: [("0.03".to_string(), alpha)].into_iter().collect(),
            bank_size_before: 10,
            bank_size_after: 5,
            reduction_ratio: ratio,
            insertion_count: 1,
        }
    }

    #[test]
    fn aggregate_counts() {
        let rs = vec![
            result("a", true, true, 0.5),
            result("b", false, false, 0.0),
            result("c", true, true, 0.25),
        ];
        let rep = aggregate(&rs).unwrap();
        assert_eq!(rep.alpha_counts["0.03"], 2);
        assert_eq!(rep.hits, 2);
        assert!((rep.mean_reduction_ratio - 0.25).abs() < 1e-15);
        assert_eq!(rep.insertion_count, 3);

        let one = aggregate(&[result("x", true, true, 0.0)]).unwrap();
        assert_eq!(one.top1_accuracy_pct, 100.0);
        assert_eq!(aggregate(&[]), Err(EvalError::EmptyResults));
    }

    #[test]
    fn aggregate_table_scale() {
        let rs: Vec<_> = (0..250)
            .map(|i| result(&format!("{i:03}"), i < 194, false, 0.0))
            .collect();
        let rep = aggregate(&rs).unwrap();
        assert!((rep.top1_accuracy_pct - 77.6).abs() < 1e-9);
        assert!(rep.to_table().contains("77.6% (194/250)"));
    }

    #[test]
    fn aggregate_is_order_free() {
        let mut rs = vec![
            result("a", true, true, 0.5),
            result("b", false, false, 0.1),
            result("c", true, false, 0.25),
        ];
        let forward = aggregate(&rs).unwrap();
        rs.reverse();
        assert_eq!(aggregate(&rs).unwrap(), forward);
    }

    #[test]
    fn alpha_keys() {
        assert_eq!(alpha_key(0.03), "0.03");
        assert_eq!(alpha_key(0.1), "0.10");
        assert_eq!(alpha_key(0.001), "0.001");
    }

    #[test]
    fn axes_parse() {
        assert_eq!("coreset_size".parse::<SweepAxis>().unwrap(), SweepAxis::CoresetSize);
        assert_eq!("layer".parse::<SweepAxis>().unwrap().to_string(), "layer");
        assert!("bogus".parse::<SweepAxis>().is_err());
    }
}
