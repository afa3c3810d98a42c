//! Metric reports as `key=value` lines and JSON.
//!
//! JSON schema:
//!
//! ```text
//! { "seed": u64, "config": {..}, "files": [ { "name", "snr_db", "si_sdr", "input_si_sdr", "delta" } ],
//!   "aggregate": { "si_sdr": {"mean", "half_width", "count"}, "input_si_sdr": {..}, "delta": {..} },
//!   "per_snr": [ { "snr_db", "si_sdr": {..}, "input_si_sdr": {..}, "delta": {..} } ] }
//! ```
//!
//! `half_width` is the normal-approximation 95% confidence half-width.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use udiffse_core::metrics::{aggregate, AggregateReport, MeanCi, MetricReport};

use crate::error::Result;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub snr_db: Option<f64>,
    pub si_sdr: f64,
    pub input_si_sdr: f64,
    pub delta: f64,
}

impl FileEntry {
    pub fn new(name: impl Into<String>, snr_db: Option<f64>, m: &MetricReport) -> Self {
        Self {
            name: name.into(),
            snr_db,
            si_sdr: m.si_sdr,
            input_si_sdr: m.input_si_sdr,
            delta: m.delta,
        }
    }

    fn metric(&self) -> MetricReport {
        MetricReport {
            si_sdr: self.si_sdr,
            input_si_sdr: self.input_si_sdr,
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

impl From<MeanCi> for Interval {
    fn from(m: MeanCi) -> Self {
        Self {
            mean: m.mean,
            half_width: m.half_width,
            count: m.count,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Summary {
    pub si_sdr: Interval,
    pub input_si_sdr: Interval,
    pub delta: Interval,
}

impl From<AggregateReport> for Summary {
    fn from(a: AggregateReport) -> Self {
        Self {
            si_sdr: a.si_sdr.into(),
            input_si_sdr: a.input_si_sdr.into(),
            delta: a.delta.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SnrSummary {
    pub snr_db: f64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    pub aggregate: Summary,
    pub per_snr: Vec<SnrSummary>,
}

impl Report {
    pub fn new(seed: u64, config: BTreeMap<String, String>, files: Vec<FileEntry>) -> Result<Self> {
        let metrics: Vec<MetricReport> = files.iter().map(FileEntry::metric).collect();
        let aggregate = aggregate(&metrics)?.into();
        let mut snrs: Vec<f64> = files.iter().filter_map(|f| f.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        let per_snr = snrs
            .into_iter()
            .map(|snr| {
                let group: Vec<MetricReport> =
                    files.iter().filter(|f| f.snr_db == Some(snr)).map(FileEntry::metric).collect();
                Ok(SnrSummary {
                    snr_db: snr,
                    summary: aggregate_of(&group)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed,
            config,
            files,
            aggregate,
            per_snr,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialise")
    }

    /// One `key=value` line per fact, header first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "seed={}", self.seed).unwrap();
        for (k, v) in &self.config {
            writeln!(out, "config.{k}={v}").unwrap();
        }
        for f in &self.files {
            write!(out, "file={}", f.name).unwrap();
            if let Some(snr) = f.snr_db {
                write!(out, " snr_db={snr}").unwrap();
            }
            writeln!(
                out,
                " si_sdr={:.4} input_si_sdr={:.4} delta={:.4}",
                f.si_sdr, f.input_si_sdr, f.delta
            )
            .unwrap();
        }
        for s in &self.per_snr {
            write_summary(&mut out, &format!("snr_db={} ", s.snr_db), &s.summary);
        }
        write_summary(&mut out, "", &self.aggregate);
        out
    }
}

fn aggregate_of(group: &[MetricReport]) -> Result<Summary> {
    Ok(aggregate(group)?.into())
}

fn write_summary(out: &mut String, prefix: &str, s: &Summary) {
    for (name, i) in [("si_sdr", s.si_sdr), ("input_si_sdr", s.input_si_sdr), ("delta", s.delta)] {
        writeln!(
            out,
            "{prefix}mean.{name}={:.4} half_width.{name}={:.4} count={}",
            i.mean, i.half_width, i.count
        )
        .unwrap();
    }
}
