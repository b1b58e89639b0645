use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::aqm::{DropCause, DropRecord};

/// Nearest-rank percentile of an ascending slice: the element at 1-based
/// rank `ceil(q/100 * n)`, with `q = 0` giving the minimum.
pub fn percentile<T: Copy>(sorted: &[T], q: f64) -> Result<T, MetricsError> {
    if sorted.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(MetricsError::InvalidQuantile(q));
    }
    let n = sorted.len();
    // Multiply before dividing so integral q*n/100 stays exact.
    let rank = ((q * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Empirical CDF as `(value, fraction <= value)` pairs, one per distinct
/// value, ascending.
pub fn cdf_export<T: Copy + PartialOrd>(samples: &[T]) -> Result<Vec<(T, f64)>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("samples must be totally ordered"));
    let n = sorted.len() as f64;
    let mut out: Vec<(T, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

/// Fraction of a second's capacity used: `bits / rate`.
pub fn utilization_sample(bits: f64, link_rate_bps: u64) -> f64 {
    assert!(link_rate_bps > 0, "link rate must be positive");
    bits / link_rate_bps as f64
}

/// Drop counts per cause and their shares of the total.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DropAttribution {
    pub n_DD: u64,
    pub n_RD: u64,
    pub n_BO: u64,
    pub n_CoDel: u64,
    pub n_tot: u64,
    pub r_DD: Option<f64>,
    pub r_RD: Option<f64>,
    pub r_BO: Option<f64>,
    pub r_CoDel: Option<f64>,
}

impl DropAttribution {
    pub fn count(&self, cause: DropCause) -> u64 {
        match cause {
            DropCause::DeterministicDrop => self.n_DD,
            DropCause::RandomDrop => self.n_RD,
            DropCause::BufferOverflow => self.n_BO,
            DropCause::CodelDrop => self.n_CoDel,
        }
    }

    pub fn share(&self, cause: DropCause) -> Option<f64> {
        match cause {
            DropCause::DeterministicDrop => self.r_DD,
            DropCause::RandomDrop => self.r_RD,
            DropCause::BufferOverflow => self.r_BO,
            DropCause::CodelDrop => self.r_CoDel,
        }
    }

    pub fn from_counts(n_dd: u64, n_rd: u64, n_bo: u64, n_codel: u64) -> Self {
        let n_tot = n_dd + n_rd + n_bo + n_codel;
        let share = |n: u64| (n_tot > 0).then(|| n as f64 / n_tot as f64);
        DropAttribution {
            n_DD: n_dd,
            n_RD: n_rd,
            n_BO: n_bo,
            n_CoDel: n_codel,
            n_tot,
            r_DD: share(n_dd),
            r_RD: share(n_rd),
            r_BO: share(n_bo),
            r_CoDel: share(n_codel),
        }
    }
}

/// 5th, 50th and 95th percentile of the queuing delay at drop time, in ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropDelayPercentiles {
    pub count: u64,
    pub p5_ns: u64,
    pub p50_ns: u64,
    pub p95_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    #[serde(flatten)]
    pub attribution: DropAttribution,
    /// Keyed by cause tag (`DD`, `RD`, `BO`, `CoDel`); causes with no drops
    /// are absent.
    pub delay_at_drop: BTreeMap<String, DropDelayPercentiles>,
}

pub fn attribute_drops<'a, I>(records: I) -> DropReport
where
    I: IntoIterator<Item = &'a DropRecord>,
{
    let mut delays: BTreeMap<DropCause, Vec<u64>> = BTreeMap::new();
    for r in records {
        delays
            .entry(r.cause)
            .or_default()
            .push(crate::engine::duration_nanos(r.queuing_delay_at_drop));
    }
    let n = |c: DropCause| delays.get(&c).map_or(0, |v| v.len() as u64);
    let attribution = DropAttribution::from_counts(
        n(DropCause::DeterministicDrop),
        n(DropCause::RandomDrop),
        n(DropCause::BufferOverflow),
        n(DropCause::CodelDrop),
    );
    let delay_at_drop = delays
        .into_iter()
        .map(|(cause, mut v)| {
            v.sort_unstable();
            let p = |q| percentile(&v, q).expect("non-empty");
            (
                cause.tag().to_string(),
                DropDelayPercentiles {
                    count: v.len() as u64,
                    p5_ns: p(5.0),
                    p50_ns: p(50.0),
                    p95_ns: p(95.0),
                },
            )
        })
        .collect();
    DropReport {
        attribution,
        delay_at_drop,
    }
}

/// Distribution summary of a set of delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: u64,
    pub mean_ns: f64,
    pub p5_ns: u64,
    pub p25_ns: u64,
    pub p50_ns: u64,
    pub p75_ns: u64,
    pub p90_ns: u64,
    pub p95_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl DelayStats {
    /// `sorted` must be ascending.
    pub fn from_sorted(sorted: &[u64]) -> Result<Self, MetricsError> {
        let p = |q| percentile(sorted, q);
        let sum: u128 = sorted.iter().map(|&v| u128::from(v)).sum();
        Ok(DelayStats {
            count: sorted.len() as u64,
            mean_ns: sum as f64 / sorted.len().max(1) as f64,
            p5_ns: p(5.0)?,
            p25_ns: p(25.0)?,
            p50_ns: p(50.0)?,
            p75_ns: p(75.0)?,
            p90_ns: p(90.0)?,
            p95_ns: p(95.0)?,
            p99_ns: p(99.0)?,
            max_ns: p(100.0)?,
        })
    }

    pub fn percentile(&self, q: u32) -> Option<Duration> {
        let ns = match q {
            5 => self.p5_ns,
            25 => self.p25_ns,
            50 => self.p50_ns,
            75 => self.p75_ns,
            90 => self.p90_ns,
            95 => self.p95_ns,
            99 => self.p99_ns,
            100 => self.max_ns,
            _ => return None,
        };
        Some(Duration::from_nanos(ns))
    }
}
