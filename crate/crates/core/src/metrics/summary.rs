use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{attribute_drops, percentile, DelayStats, DropReport};
use super::{mean, MetricSeries};
use crate::engine::duration_nanos;
use crate::packet::ClassKey;

/// Bumped whenever a field of [`Summary`] changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationStats {
    pub samples: u64,
    pub mean: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodputStats {
    pub samples: u64,
    /// Mean of the per-second aggregate goodput of the class.
    pub mean_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownloadStats {
    pub size_bytes: u32,
    pub requested: u64,
    pub completed: u64,
    /// Still running when the simulation ended.
    pub truncated: u64,
    /// Over completed downloads only.
    pub duration: Option<DelayStats>,
}

/// Distribution summaries over one or more pooled runs. Percentiles are
/// nearest-rank over the pooled samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub runs: u32,
    pub qdelay: Option<DelayStats>,
    /// Keyed by class label such as `cbr-100`.
    pub qdelay_by_class: BTreeMap<String, DelayStats>,
    pub owd_by_class: BTreeMap<String, DelayStats>,
    pub utilization: Option<UtilizationStats>,
    pub goodput: BTreeMap<String, GoodputStats>,
    pub drops: DropReport,
    pub downloads: Vec<DownloadStats>,
}

fn by_class(samples: impl Iterator<Item = (ClassKey, u64)>) -> BTreeMap<String, DelayStats> {
    let mut grouped: BTreeMap<ClassKey, Vec<u64>> = BTreeMap::new();
    for (class, ns) in samples {
        grouped.entry(class).or_default().push(ns);
    }
    grouped
        .into_iter()
        .map(|(class, mut v)| {
            v.sort_unstable();
            (class.to_string(), DelayStats::from_sorted(&v).expect("non-empty group"))
        })
        .collect()
}

impl Summary {
    pub fn from_runs(runs: &[&MetricSeries]) -> Summary {
        let mut all: Vec<u64> = runs
            .iter()
            .flat_map(|r| r.qdelay.iter().map(|s| duration_nanos(s.delay)))
            .collect();
        all.sort_unstable();
        let qdelay = DelayStats::from_sorted(&all).ok();

        let qdelay_by_class = by_class(
            runs.iter()
                .flat_map(|r| r.qdelay.iter().map(|s| (s.class, duration_nanos(s.delay)))),
        );
        let owd_by_class = by_class(
            runs.iter()
                .flat_map(|r| r.owd.iter().map(|s| (s.class, duration_nanos(s.delay)))),
        );

        let mut util: Vec<f64> = runs.iter().flat_map(|r| r.utilization.iter().copied()).collect();
        let utilization = mean(&util).map(|m| {
            util.sort_by(f64::total_cmp);
            let p = |q| percentile(&util, q).expect("non-empty");
            UtilizationStats {
                samples: util.len() as u64,
                mean: m,
                p5: p(5.0),
                p50: p(50.0),
                p95: p(95.0),
            }
        });

        let mut goodput_rows: BTreeMap<ClassKey, Vec<f64>> = BTreeMap::new();
        for r in runs {
            for g in &r.goodput {
                goodput_rows.entry(g.class).or_default().push(g.bps);
            }
        }
        let goodput = goodput_rows
            .into_iter()
            .map(|(class, v)| {
                (
                    class.to_string(),
                    GoodputStats {
                        samples: v.len() as u64,
                        mean_bps: mean(&v).unwrap_or(0.0),
                    },
                )
            })
            .collect();

        let drops = attribute_drops(runs.iter().flat_map(|r| r.drops.iter()));

        let mut by_size: BTreeMap<u32, (u64, Vec<u64>)> = BTreeMap::new();
        for d in runs.iter().flat_map(|r| r.downloads.iter()) {
            let entry = by_size.entry(d.size_bytes).or_default();
            entry.0 += 1;
            if let Some(t) = d.duration {
                entry.1.push(duration_nanos(t));
            }
        }
        let downloads = by_size
            .into_iter()
            .map(|(size_bytes, (requested, mut done))| {
                done.sort_unstable();
                DownloadStats {
                    size_bytes,
                    requested,
                    completed: done.len() as u64,
                    truncated: requested - done.len() as u64,
                    duration: DelayStats::from_sorted(&done).ok(),
                }
            })
            .collect();

        Summary {
            schema_version: SCHEMA_VERSION,
            runs: runs.len() as u32,
            qdelay,
            qdelay_by_class,
            owd_by_class,
            utilization,
            goodput,
            drops,
            downloads,
        }
    }

    pub fn download(&self, size_bytes: u32) -> Option<&DownloadStats> {
        self.downloads.iter().find(|d| d.size_bytes == size_bytes)
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::aqm::{DropCause, DropRecord};
    use crate::engine::SimTime;
    use crate::metrics::{DelaySample, GoodputSample};
    use crate::packet::TrafficClass;
    use crate::transport::DownloadRecord;

    const CBR: ClassKey = ClassKey {
        class: TrafficClass::Cbr,
        rtt_ms: 500,
    };

    fn series(delays_ms: &[u64], util: &[f64]) -> MetricSeries {
        MetricSeries {
            qdelay: delays_ms
                .iter()
                .map(|&ms| DelaySample {
                    at: SimTime::ZERO,
                    delay: Duration::from_millis(ms),
                    class: CBR,
                })
                .collect(),
            utilization: util.to_vec(),
            goodput: vec![GoodputSample {
                second: 0,
                class: CBR,
                bps: 87_000.0,
            }],
            drops: vec![DropRecord {
                at: SimTime::ZERO,
                cause: DropCause::DeterministicDrop,
                queuing_delay_at_drop: Duration::from_millis(31),
                flow: 0,
                update_epoch: 3,
            }],
            downloads: vec![
                DownloadRecord {
                    flow: 1,
                    size_bytes: 15_000,
                    requested_at: SimTime::ZERO,
                    duration: Some(Duration::from_millis(400)),
                },
                DownloadRecord {
                    flow: 1,
                    size_bytes: 15_000,
                    requested_at: SimTime::from_secs(9),
                    duration: None,
                },
            ],
            ..MetricSeries::default()
        }
    }

    #[test]
    fn pools_samples_across_runs() {
        let a = series(&[1, 2], &[0.5]);
        let b = series(&[3, 4], &[1.0]);
        let s = Summary::from_runs(&[&a, &b]);
        assert_eq!(s.runs, 2);
        let q = s.qdelay.unwrap();
        assert_eq!(q.count, 4);
        assert_eq!(q.p50_ns, 2_000_000);
        assert_eq!(q.max_ns, 4_000_000);
        assert_eq!(s.qdelay_by_class["cbr-500"], q);
        assert_eq!(s.utilization.unwrap().mean, 0.75);
        assert_eq!(s.goodput["cbr-500"].mean_bps, 87_000.0);
        assert_eq!(s.drops.attribution.n_DD, 2);
        let d = s.download(15_000).unwrap();
        assert_eq!((d.requested, d.completed, d.truncated), (4, 2, 2));
        assert_eq!(d.duration.unwrap().p50_ns, 400_000_000);
    }

    #[test]
    fn empty_run_serializes() {
        let s = Summary::from_runs(&[&MetricSeries::default()]);
        assert!(s.qdelay.is_none());
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"r_DD\":null"));
        let back: Summary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
