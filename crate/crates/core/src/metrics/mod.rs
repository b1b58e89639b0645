//! Measurement taps, per-run series and their summaries.

mod stats;
mod summary;

use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use crate::aqm::DropRecord;
use crate::engine::{duration_nanos, SimTime};
use crate::packet::ClassKey;
use crate::transport::DownloadRecord;

pub use stats::{
    attribute_drops, cdf_export, percentile, utilization_sample, DelayStats, DropAttribution,
    DropDelayPercentiles, DropReport,
};
pub use summary::{DownloadStats, GoodputStats, Summary, UtilizationStats, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MetricsError {
    #[error("no samples")]
    EmptySeries,
    #[error("quantile {0} outside [0, 100]")]
    InvalidQuantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelaySample {
    pub at: SimTime,
    pub delay: Duration,
    pub class: ClassKey,
}

/// Aggregate goodput of one class over one second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodputSample {
    pub second: u32,
    pub class: ClassKey,
    pub bps: f64,
}

/// Everything measured during one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    /// Bottleneck queuing delay of every packet that left the queue, in
    /// departure order.
    pub qdelay: Vec<DelaySample>,
    /// Source-to-sink delay of every delivered data packet.
    pub owd: Vec<DelaySample>,
    /// Busy fraction of the bottleneck, one entry per whole elapsed second.
    pub utilization: Vec<f64>,
    /// One entry per whole second and class, second-major.
    pub goodput: Vec<GoodputSample>,
    pub drops: Vec<DropRecord>,
    pub downloads: Vec<DownloadRecord>,
}

impl MetricSeries {
    pub fn qdelay_sorted_ns(&self, class: Option<ClassKey>) -> Vec<u64> {
        sorted_ns(&self.qdelay, class)
    }

    pub fn owd_sorted_ns(&self, class: Option<ClassKey>) -> Vec<u64> {
        sorted_ns(&self.owd, class)
    }

    pub fn mean_utilization(&self) -> Option<f64> {
        mean(&self.utilization)
    }
}

fn sorted_ns(samples: &[DelaySample], class: Option<ClassKey>) -> Vec<u64> {
    let mut v: Vec<u64> = samples
        .iter()
        .filter(|s| class.is_none_or(|c| c == s.class))
        .map(|s| duration_nanos(s.delay))
        .collect();
    v.sort_unstable();
    v
}

pub(crate) fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Accumulates measurements while a simulation runs.
#[derive(Debug, Clone)]
pub struct Collector {
    seconds: usize,
    busy_ns: Vec<u64>,
    goodput_bytes: BTreeMap<ClassKey, Vec<u64>>,
    series: MetricSeries,
}

const NS_PER_SEC: u64 = 1_000_000_000;

impl Collector {
    /// `classes` fixes which goodput rows are emitted, including idle ones.
    pub fn new(duration: Duration, classes: impl IntoIterator<Item = ClassKey>) -> Self {
        let seconds = usize::try_from(duration.as_secs()).expect("duration fits usize");
        Collector {
            seconds,
            busy_ns: vec![0; seconds],
            goodput_bytes: classes.into_iter().map(|c| (c, vec![0; seconds])).collect(),
            series: MetricSeries::default(),
        }
    }

    /// Bottleneck transmitting during `[start, end)`.
    pub fn record_busy(&mut self, start: SimTime, end: SimTime) {
        let (mut t, end) = (start.as_nanos(), end.as_nanos());
        while t < end {
            let sec = (t / NS_PER_SEC) as usize;
            if sec >= self.seconds {
                break;
            }
            let boundary = (sec as u64 + 1) * NS_PER_SEC;
            let stop = end.min(boundary);
            self.busy_ns[sec] += stop - t;
            t = stop;
        }
    }

    pub fn record_qdelay(&mut self, at: SimTime, delay: Duration, class: ClassKey) {
        self.series.qdelay.push(DelaySample { at, delay, class });
    }

    pub fn record_owd(&mut self, at: SimTime, delay: Duration, class: ClassKey) {
        self.series.owd.push(DelaySample { at, delay, class });
    }

    /// Unique application payload handed to a sink.
    pub fn record_delivery(&mut self, at: SimTime, class: ClassKey, bytes: u32) {
        let sec = (at.as_nanos() / NS_PER_SEC) as usize;
        if sec < self.seconds {
            let row = self
                .goodput_bytes
                .get_mut(&class)
                .expect("delivery for an undeclared class");
            row[sec] += u64::from(bytes);
        }
    }

    pub fn record_drop(&mut self, record: DropRecord) {
        self.series.drops.push(record);
    }

    pub fn record_download(&mut self, record: DownloadRecord) {
        self.series.downloads.push(record);
    }

    pub fn finish(mut self) -> MetricSeries {
        self.series.utilization = self
            .busy_ns
            .iter()
            .map(|&ns| ns as f64 / NS_PER_SEC as f64)
            .collect();
        for sec in 0..self.seconds {
            for (class, row) in &self.goodput_bytes {
                self.series.goodput.push(GoodputSample {
                    second: sec as u32,
                    class: *class,
                    bps: (row[sec] * 8) as f64,
                });
            }
        }
        self.series
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::TrafficClass;

    const FTP: ClassKey = ClassKey {
        class: TrafficClass::Bulk,
        rtt_ms: 100,
    };

    #[test]
    fn busy_time_splits_across_seconds() {
        let mut c = Collector::new(Duration::from_secs(3), [FTP]);
        c.record_busy(SimTime::from_millis(900), SimTime::from_millis(1_300));
        c.record_busy(SimTime::from_millis(2_000), SimTime::from_millis(3_500));
        let s = c.finish();
        assert_eq!(s.utilization.len(), 3);
        assert!((s.utilization[0] - 0.1).abs() < 1e-12);
        assert!((s.utilization[1] - 0.3).abs() < 1e-12);
        assert_eq!(s.utilization[2], 1.0);
    }

    #[test]
    fn goodput_rows_include_idle_seconds() {
        let mut c = Collector::new(Duration::from_millis(2_500), [FTP]);
        c.record_delivery(SimTime::from_millis(10), FTP, 1_000);
        c.record_delivery(SimTime::from_millis(20), FTP, 500);
        c.record_delivery(SimTime::from_millis(2_100), FTP, 500);
        let s = c.finish();
        assert_eq!(s.goodput.len(), 2);
        assert_eq!(s.goodput[0].bps, 12_000.0);
        assert_eq!(s.goodput[1].bps, 0.0);
    }

    #[test]
    fn sorted_delays_filter_by_class() {
        let other = ClassKey {
            class: TrafficClass::Cbr,
            rtt_ms: 100,
        };
        let mut c = Collector::new(Duration::from_secs(1), [FTP, other]);
        c.record_qdelay(SimTime::ZERO, Duration::from_millis(3), FTP);
        c.record_qdelay(SimTime::ZERO, Duration::from_millis(1), other);
        c.record_qdelay(SimTime::ZERO, Duration::from_millis(2), FTP);
        let s = c.finish();
        assert_eq!(s.qdelay_sorted_ns(None), vec![1_000_000, 2_000_000, 3_000_000]);
        assert_eq!(s.qdelay_sorted_ns(Some(FTP)), vec![2_000_000, 3_000_000]);
    }
}
