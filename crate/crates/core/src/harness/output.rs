//! Aggregation and the on-disk formats.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CampaignResult, InstanceRecord, SlotRecord};
use crate::error::{Error, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Standard error of the mean over instances; 0 for a single instance.
    pub stderr: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MetricSummary { mean: 0.0, stderr: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MetricSummary { mean, stderr }
    }
}

/// Campaign means over per-instance means (each instance averages its slots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_instances: usize,
    pub sum_rate: MetricSummary,
    pub objective: MetricSummary,
    pub scheduled_pairs: MetricSummary,
    pub edge_rate_mean: MetricSummary,
    pub proposals: MetricSummary,
    pub static_iterations: MetricSummary,
    pub ssd_rounds: MetricSummary,
    pub forbidden_excluded: MetricSummary,
    pub wall_time_us: MetricSummary,
    /// `(proposal count, fraction of slots with at most that many)`.
    pub proposals_cdf: Vec<(usize, f64)>,
}

fn slot_mean(slots: &[SlotRecord], f: impl Fn(&SlotRecord) -> f64) -> f64 {
    slots.iter().map(f).sum::<f64>() / slots.len() as f64
}

/// Empirical CDF of the per-slot proposal counts.
pub fn proposals_cdf(slots: &[&SlotRecord]) -> Vec<(usize, f64)> {
    let mut counts: Vec<usize> = slots.iter().map(|s| s.proposals).collect();
    counts.sort_unstable();
    let total = counts.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        let frac = (i + 1) as f64 / total;
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 = frac,
            _ => out.push((c, frac)),
        }
    }
    out
}

/// Aggregates grouped by instance id, in first-seen order.
pub fn aggregate_slots(slots: &[SlotRecord]) -> Aggregate {
    let mut groups: Vec<(usize, Vec<SlotRecord>)> = Vec::new();
    for s in slots {
        match groups.iter_mut().find(|(i, _)| *i == s.instance) {
            Some((_, g)) => g.push(s.clone()),
            None => groups.push((s.instance, vec![s.clone()])),
        }
    }
    let per = |f: fn(&SlotRecord) -> f64| -> MetricSummary {
        let v: Vec<f64> = groups.iter().map(|(_, g)| slot_mean(g, f)).collect();
        MetricSummary::of(&v)
    };
    Aggregate {
        n_instances: groups.len(),
        sum_rate: per(|s| s.sum_rate),
        objective: per(|s| s.objective),
        scheduled_pairs: per(|s| s.scheduled_pairs as f64),
        edge_rate_mean: per(|s| s.edge_rate_mean),
        proposals: per(|s| s.proposals as f64),
        static_iterations: per(|s| s.static_iterations as f64),
        ssd_rounds: per(|s| s.ssd_rounds as f64),
        forbidden_excluded: per(|s| s.forbidden_excluded as f64),
        wall_time_us: per(|s| s.wall_time_us),
        proposals_cdf: proposals_cdf(&slots.iter().collect::<Vec<_>>()),
    }
}

pub fn aggregate(instances: &[InstanceRecord]) -> Aggregate {
    let slots: Vec<SlotRecord> = instances.iter().flat_map(|i| i.slots.iter().cloned()).collect();
    aggregate_slots(&slots)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct CdfRow {
    proposals: usize,
    cdf: f64,
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    schema_version: u32,
    config: &'a super::SimConfig,
    aggregate: &'a Aggregate,
}

/// Writes `instances.csv`, `aggregate.json`, `proposals_cdf.csv` and the
/// effective `config.cfg` into `dir`.
pub fn write_campaign(result: &CampaignResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let slots: Vec<&SlotRecord> = result.instances.iter().flat_map(|i| &i.slots).collect();
    write_rows(&dir.join("instances.csv"), &slots)?;

    let cdf: Vec<CdfRow> = result
        .aggregate
        .proposals_cdf
        .iter()
        .map(|&(proposals, cdf)| CdfRow { proposals, cdf })
        .collect();
    write_rows(&dir.join("proposals_cdf.csv"), &cdf)?;

    let json_path = dir.join("aggregate.json");
    let body = AggregateFile {
        schema_version: CSV_SCHEMA_VERSION,
        config: &result.config,
        aggregate: &result.aggregate,
    };
    let text = serde_json::to_string_pretty(&body).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;

    let cfg_path = dir.join("config.cfg");
    fs::write(&cfg_path, result.config.to_text()).map_err(io_err(&cfg_path))
}

/// Reads back an `instances.csv`.
pub fn read_slot_records(path: &Path) -> Result<Vec<SlotRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: SlotRecord = row.map_err(csv_err(path))?;
        if row.schema_version != CSV_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: schema_version {} (expected {CSV_SCHEMA_VERSION})",
                path.display(),
                row.schema_version
            )));
        }
        out.push(row);
    }
    Ok(out)
}
