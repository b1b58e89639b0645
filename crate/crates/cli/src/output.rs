//! Result files of a replication batch.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aqmsim_core::engine::duration_nanos;
use aqmsim_core::metrics::{percentile, MetricSeries, Summary, SCHEMA_VERSION};
use aqmsim_core::netsim::{QueueReport, RunResult, ScenarioConfig, TcpTotals};
use serde::{Deserialize, Serialize};

use crate::manifest::Emit;
use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn replication_dir(root: &Path, replication: u32) -> PathBuf {
    root.join(format!("rep_{replication:03}"))
}

/// Contents of a replication's `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub schema_version: u32,
    pub replication: u32,
    pub seed: u64,
    pub events_processed: u64,
    pub summary: Summary,
    pub tcp: TcpTotals,
    pub queues: Vec<QueueReport>,
}

/// Contents of `aggregate.json`: every replication's samples pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    pub replications: u32,
    pub seeds: Vec<u64>,
    pub summary: Summary,
    /// Nearest-rank queuing-delay percentiles 0, 1, ..., 100 in ns, pooled
    /// over all packets (`all`) and per class.
    pub qdelay_quantiles_ns: BTreeMap<String, Vec<u64>>,
    pub tcp: TcpTotals,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(out).and_then(|()| out.flush()).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_csv(path: &Path, header: &str, rows: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut out = create(path)?;
    writeln!(out, "{header}")
        .and_then(|()| rows(&mut out))
        .and_then(|()| out.flush())
        .map_err(io_err(path))
}

fn write_series_csv(dir: &Path, m: &MetricSeries) -> Result<(), CliError> {
    write_csv(&dir.join("qdelay.csv"), "time_ns,delay_ns", |w| {
        for s in &m.qdelay {
            writeln!(w, "{},{}", s.at.as_nanos(), duration_nanos(s.delay))?;
        }
        Ok(())
    })?;
    write_csv(&dir.join("util.csv"), "second,fraction", |w| {
        for (sec, u) in m.utilization.iter().enumerate() {
            writeln!(w, "{sec},{u}")?;
        }
        Ok(())
    })?;
    write_csv(&dir.join("goodput.csv"), "second,class,bps", |w| {
        for g in &m.goodput {
            writeln!(w, "{},{},{}", g.second, g.class, g.bps)?;
        }
        Ok(())
    })?;
    write_csv(&dir.join("drops.csv"), "time_ns,cause,delay_at_drop_ns,flow", |w| {
        for d in &m.drops {
            writeln!(
                w,
                "{},{},{},{}",
                d.at.as_nanos(),
                d.cause.tag(),
                duration_nanos(d.queuing_delay_at_drop),
                d.flow
            )?;
        }
        Ok(())
    })?;
    write_csv(&dir.join("downloads.csv"), "flow,size_bytes,duration_ns", |w| {
        for d in &m.downloads {
            match d.duration {
                Some(t) => writeln!(w, "{},{},{}", d.flow, d.size_bytes, duration_nanos(t))?,
                None => writeln!(w, "{},{},", d.flow, d.size_bytes)?,
            }
        }
        Ok(())
    })
}

/// Writes one replication's files into `rep_XXX` under `root`.
pub fn write_replication(
    root: &Path,
    cfg: &ScenarioConfig,
    result: &RunResult,
    emit: Emit,
) -> Result<(), CliError> {
    let dir = replication_dir(root, cfg.replication);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    if emit.csv() {
        write_series_csv(&dir, &result.metrics)?;
    }
    if emit.json() {
        let summary = ReplicationSummary {
            schema_version: SCHEMA_VERSION,
            replication: cfg.replication,
            seed: cfg.seed,
            events_processed: result.events.events_processed,
            summary: Summary::from_runs(&[&result.metrics]),
            tcp: result.tcp,
            queues: result.queues.clone(),
        };
        write_json(&dir.join(SUMMARY_FILE), &summary)?;
    }
    Ok(())
}

/// Percentiles 0..=100 of an ascending series.
pub fn quantile_curve(sorted: &[u64]) -> Vec<u64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    (0..=100)
        .map(|q| percentile(sorted, f64::from(q)).expect("non-empty"))
        .collect()
}

impl Aggregate {
    pub fn build(scenario: ScenarioConfig, seeds: Vec<u64>, runs: &[&RunResult]) -> Aggregate {
        let metrics: Vec<&MetricSeries> = runs.iter().map(|r| &r.metrics).collect();
        let summary = Summary::from_runs(&metrics);
        let mut pooled: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for m in &metrics {
            for s in &m.qdelay {
                let ns = duration_nanos(s.delay);
                pooled.entry("all".into()).or_default().push(ns);
                pooled.entry(s.class.to_string()).or_default().push(ns);
            }
        }
        let qdelay_quantiles_ns = pooled
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_unstable();
                (k, quantile_curve(&v))
            })
            .collect();
        let mut tcp = TcpTotals::default();
        for r in runs {
            tcp.connections += r.tcp.connections;
            tcp.retransmissions += r.tcp.retransmissions;
            tcp.timeouts += r.tcp.timeouts;
            tcp.reductions += r.tcp.reductions;
        }
        Aggregate {
            schema_version: SCHEMA_VERSION,
            scenario,
            replications: runs.len() as u32,
            seeds,
            summary,
            qdelay_quantiles_ns,
            tcp,
        }
    }
}
