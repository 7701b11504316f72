//! Latency summaries in boxplot form and report export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::highphy::SlotTimingRecord;

/// Version of the report layout written by [`export_report`].
pub const SCHEMA_VERSION: u32 = 1;

/// Boxplot summary: deciles as whiskers, extrema as fliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyDistribution {
    pub count: usize,
    pub min: f64,
    pub p10: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub p90: f64,
    pub max: f64,
    pub mean: f64,
}

/// Nearest-rank percentile of sorted data: the smallest value with at
/// least `p` percent of the samples at or below it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn summarize(samples: &[f64]) -> Result<LatencyDistribution> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("NaN latency sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(LatencyDistribution {
        count: s.len(),
        min: s[0],
        p10: nearest_rank(&s, 10.0),
        q1: nearest_rank(&s, 25.0),
        median: nearest_rank(&s, 50.0),
        q3: nearest_rank(&s, 75.0),
        p90: nearest_rank(&s, 90.0),
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UL")]
    Ul,
    #[serde(rename = "DL")]
    Dl,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Ul => "UL",
            Direction::Dl => "DL",
        }
    }
}

/// One summarized metric of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub direction: Direction,
    pub metric: String,
    pub distribution: LatencyDistribution,
}

/// Delivered traffic of one direction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficCounters {
    pub slots: u64,
    pub tbs_ok: u64,
    pub tbs_failed: u64,
    pub bits_delivered: u64,
    pub deadline_misses: u64,
    pub goodput_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance: u32,
    pub cores: Vec<usize>,
    /// Slot at which the instance stopped, if it did.
    pub failed_at_slot: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    pub dl: TrafficCounters,
    pub ul: TrafficCounters,
    pub metrics: Vec<MetricBlock>,
}

impl InstanceMetrics {
    pub fn metric(&self, direction: Direction, name: &str) -> Option<&LatencyDistribution> {
        self.metrics
            .iter()
            .find(|m| m.direction == direction && m.metric == name)
            .map(|m| &m.distribution)
    }
}

/// Coding and total time distributions per direction present in `records`.
pub fn record_blocks(records: &[SlotTimingRecord]) -> Result<Vec<MetricBlock>> {
    let mut out = Vec::new();
    for direction in [Direction::Dl, Direction::Ul] {
        let recs: Vec<&SlotTimingRecord> = records.iter().filter(|r| r.direction == direction).collect();
        if recs.is_empty() {
            continue;
        }
        let coding: Vec<f64> = recs.iter().map(|r| r.coding_us).collect();
        let total: Vec<f64> = recs.iter().map(|r| r.total_us).collect();
        out.push(MetricBlock { direction, metric: "coding_us".into(), distribution: summarize(&coding)? });
        out.push(MetricBlock { direction, metric: "total_us".into(), distribution: summarize(&total)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunInfo {
    pub profile: String,
    pub backend: String,
    pub n_instances: usize,
    pub duration_slots: u64,
    pub seed: u64,
    pub clock: String,
}

/// Result of a deployment run. Raw per-slot records are kept for
/// JSON-lines export and left out of the summary document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub schema_version: u32,
    pub run: RunInfo,
    pub instances: Vec<InstanceMetrics>,
    #[serde(skip)]
    pub records: Vec<SlotTimingRecord>,
}

impl Default for MetricsBundle {
    fn default() -> Self {
        MetricsBundle { schema_version: SCHEMA_VERSION, run: RunInfo::default(), instances: Vec::new(), records: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Header of the CSV report.
pub const CSV_HEADER: &str = "schema_version,instance,direction,metric,count,min,p10,q1,median,q3,p90,max,mean";

/// Writes the bundle summary. JSON is pretty-printed with a trailing
/// newline; CSV has one row per (instance, direction, metric).
pub fn export_report(bundle: &MetricsBundle, format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, bundle)?;
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for inst in &bundle.instances {
                for m in &inst.metrics {
                    let d = &m.distribution;
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        bundle.schema_version,
                        inst.instance,
                        m.direction.as_str(),
                        m.metric,
                        d.count,
                        d.min,
                        d.p10,
                        d.q1,
                        d.median,
                        d.q3,
                        d.p90,
                        d.max,
                        d.mean
                    )?;
                }
            }
        }
    }
    Ok(())
}

pub fn report_string(bundle: &MetricsBundle, format: ReportFormat) -> Result<String> {
    let mut buf = Vec::new();
    export_report(bundle, format, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

/// Raw slot records, one JSON object per line.
pub fn export_records(records: &[SlotTimingRecord], out: &mut dyn Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_and_ramp() {
        let d = summarize(&[5.0]).unwrap();
        assert_eq!([d.min, d.p10, d.q1, d.median, d.q3, d.p90, d.max, d.mean], [5.0; 8]);
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = summarize(&ramp).unwrap();
        assert_eq!((d.p10, d.q1, d.median, d.q3, d.p90), (10.0, 25.0, 50.0, 75.0, 90.0));
        assert!(matches!(summarize(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn empty_bundle_csv_is_header_only() {
        let s = report_string(&MetricsBundle::default(), ReportFormat::Csv).unwrap();
        assert_eq!(s, format!("{CSV_HEADER}\n"));
    }
}
