//! Tabular and plot-data outputs of simulation runs.
//!
//! Floats are written with the shortest representation that parses back to
//! the same `f64`, so reading a file recovers the recorded values exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::sim::{summarize, SimResult, Summary};

pub const QUEUE_PLOT: &str = "queue_backlog.dat";
pub const ACCURACY_PLOT: &str = "avg_accuracy.dat";

/// One line of `timeseries`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: usize,
    pub policy: String,
    /// `H` or `T`.
    pub alpha: String,
    /// Backlog before the step's update.
    #[serde(rename = "Q")]
    pub q: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "P")]
    pub performance: f64,
    /// Inference latency in seconds.
    #[serde(rename = "p")]
    pub latency: f64,
    pub tpr: f64,
    /// Decision cost of this step.
    pub flops: u64,
}

pub fn timeseries_rows(result: &SimResult) -> Vec<TimeseriesRow> {
    result
        .records
        .iter()
        .map(|r| TimeseriesRow {
            t: r.t,
            policy: result.policy.label().to_string(),
            alpha: r.alpha.tag().to_string(),
            q: r.q,
            a: r.a,
            b: r.b,
            performance: r.performance,
            latency: r.latency,
            tpr: r.metrics.true_positive_rate,
            flops: r.flops,
        })
        .collect()
}

/// One line of `summary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub steps: usize,
    pub avg_q: f64,
    pub max_q: f64,
    pub final_q: f64,
    pub avg_tpr: f64,
    pub avg_recall: f64,
    pub avg_performance: f64,
    pub drift: f64,
    pub hybrid_decisions: usize,
    pub odn_decisions: usize,
    pub flops_per_decision: u64,
    pub total_flops: u64,
    pub overflow: bool,
}

impl SummaryRow {
    pub fn new(result: &SimResult) -> Self {
        let s: Summary = result.summary();
        Self {
            policy: result.policy.label().to_string(),
            steps: s.steps,
            avg_q: s.avg_q,
            max_q: s.max_q,
            final_q: s.final_q,
            avg_tpr: s.avg_tpr,
            avg_recall: s.avg_recall,
            avg_performance: s.avg_performance,
            drift: s.drift,
            hybrid_decisions: s.hybrid_decisions,
            odn_decisions: s.odn_decisions,
            flops_per_decision: result.records.first().map_or(0, |r| r.flops),
            total_flops: s.total_flops,
            overflow: s.overflow,
        }
    }
}

fn to_table<T: Serialize>(path: &Path, rows: &[T], format: OutputFormat) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))
}

fn from_table<T: for<'de> Deserialize<'de>>(path: &Path, format: OutputFormat) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Writes all runs' steps into one table, runs in the given order.
pub fn write_timeseries(path: &Path, results: &[SimResult], format: OutputFormat) -> Result<()> {
    let rows: Vec<TimeseriesRow> = results.iter().flat_map(timeseries_rows).collect();
    write_atomic(path, &to_table(path, &rows, format)?)
}

pub fn read_timeseries(path: &Path, format: OutputFormat) -> Result<Vec<TimeseriesRow>> {
    from_table(path, format)
}

pub fn write_summary(path: &Path, results: &[SimResult], format: OutputFormat) -> Result<()> {
    let rows: Vec<SummaryRow> = results.iter().map(SummaryRow::new).collect();
    write_atomic(path, &to_table(path, &rows, format)?)
}

pub fn read_summary(path: &Path, format: OutputFormat) -> Result<Vec<SummaryRow>> {
    from_table(path, format)
}

/// Whitespace-separated columns with a `#` header, one series per run;
/// shorter series are padded with `NaN`.
fn plot_table(results: &[SimResult], series: impl Fn(&SimResult) -> Vec<f64>) -> String {
    let columns: Vec<Vec<f64>> = results.iter().map(series).collect();
    let len = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::from("# t");
    for r in results {
        out.push(' ');
        out.push_str(r.policy.label());
    }
    out.push('\n');
    for t in 0..len {
        let _ = write!(out, "{t}");
        for col in &columns {
            match col.get(t) {
                Some(v) => {
                    let _ = write!(out, " {v}");
                }
                None => out.push_str(" NaN"),
            }
        }
        out.push('\n');
    }
    out
}

/// Backlog `Q[t]` for `t = 0..=T`.
pub fn queue_plot(results: &[SimResult]) -> String {
    plot_table(results, SimResult::queue_series)
}

/// Running mean of the per-step true-positive rate.
pub fn accuracy_plot(results: &[SimResult]) -> String {
    plot_table(results, |r| {
        let mut sum = 0.0;
        r.records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                sum += rec.metrics.true_positive_rate;
                sum / (i + 1) as f64
            })
            .collect()
    })
}

/// Writes timeseries, summary and both plot files into `dir`; returns the paths.
pub fn write_outputs(
    dir: &Path,
    results: &[SimResult],
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in results {
        if !r.is_empty() {
            summarize(r)?;
        }
    }
    let ext = format.extension();
    let timeseries = dir.join(format!("timeseries.{ext}"));
    let summary = dir.join(format!("summary.{ext}"));
    let queue = dir.join(QUEUE_PLOT);
    let accuracy = dir.join(ACCURACY_PLOT);
    write_timeseries(&timeseries, results, format)?;
    write_summary(&summary, results, format)?;
    write_atomic(&queue, queue_plot(results).as_bytes())?;
    write_atomic(&accuracy, accuracy_plot(results).as_bytes())?;
    Ok(vec![timeseries, summary, queue, accuracy])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerConfig;
    use crate::policies::{Policy, PolicyKind};
    use crate::sim::{run, ScenarioConfig};

    fn results() -> Vec<SimResult> {
        let scenario = ScenarioConfig::default();
        let cfg = ControllerConfig::default();
        [PolicyKind::Dpp, PolicyKind::AlwaysOdn]
            .into_iter()
            .map(|k| run(&scenario, &cfg, &Policy::fixed(k).unwrap(), 3, 25).unwrap())
            .collect()
    }

    #[test]
    fn timeseries_reads_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let res = results();
        for format in [OutputFormat::Csv, OutputFormat::Tsv] {
            let paths = write_outputs(dir.path(), &res, format).unwrap();
            let rows = read_timeseries(&paths[0], format).unwrap();
            let expected: Vec<_> = res.iter().flat_map(timeseries_rows).collect();
            assert_eq!(rows, expected);
            let summary = read_summary(&paths[1], format).unwrap();
            assert_eq!(summary.len(), 2);
            assert_eq!(summary[0].policy, "DPP");
            assert_eq!(summary[1].flops_per_decision, 0);
        }
    }

    #[test]
    fn timeseries_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        write_timeseries(&p, &results(), OutputFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,policy,alpha,Q,a,b,P,p,tpr,flops"
        );
        assert_eq!(text.lines().count(), 51);
    }

    #[test]
    fn plot_layout() {
        let res = results();
        let q = queue_plot(&res);
        let mut lines = q.lines();
        assert_eq!(lines.next().unwrap(), "# t DPP Comp1");
        assert_eq!(q.lines().count(), 1 + 26);
        let acc = accuracy_plot(&res);
        let last = acc.lines().last().unwrap();
        let cols: Vec<f64> = last
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(cols[0], 24.0);
        assert!((cols[1] - res[0].summary().avg_tpr).abs() < 1e-12);
    }

    #[test]
    fn plot_pads_short_series() {
        let mut res = results();
        res[1].records.truncate(3);
        res[1].final_q = res[1].records[2].q;
        let q = queue_plot(&res);
        assert!(q.lines().last().unwrap().ends_with(" NaN"));
    }
}
