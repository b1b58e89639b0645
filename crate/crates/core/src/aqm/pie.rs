//! PIE: a proportional-integral controller on the estimated queuing delay
//! that sets a random early-drop probability.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Decision, DropCause};
use crate::engine::SimTime;
use crate::units::serde_duration;

/// How the controller turns the backlog into a queuing-delay estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayEstimator {
    /// `queue_bytes / configured drain rate`.
    #[default]
    Backlog,
    /// `queue_bytes / measured departure rate`, as deployed PIE does.
    DepartureRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieConfig {
    #[serde(with = "serde_duration")]
    pub target: Duration,
    #[serde(with = "serde_duration")]
    pub update_interval: Duration,
    /// Gain on the delay error, per second of error.
    pub alpha: f64,
    /// Gain on the delay trend, per second of change.
    pub beta: f64,
    #[serde(with = "serde_duration")]
    pub max_burst: Duration,
    /// Scale `alpha` and `beta` down while the drop probability is small.
    pub range_scaling: bool,
    pub estimator: DelayEstimator,
}

impl Default for PieConfig {
    fn default() -> Self {
        PieConfig {
            target: Duration::from_millis(20),
            update_interval: Duration::from_millis(30),
            alpha: 0.125,
            beta: 1.25,
            max_burst: Duration::from_millis(100),
            range_scaling: true,
            estimator: DelayEstimator::Backlog,
        }
    }
}

impl PieConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.target.is_zero() {
            return Err("PIE target must be positive".into());
        }
        if self.update_interval.is_zero() {
            return Err("PIE update interval must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(format!("PIE alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(format!("PIE beta must be finite and >= 0, got {}", self.beta));
        }
        Ok(())
    }
}

/// Backlog-based delay estimate: the time needed to drain `queue_bytes` at
/// `drain_rate_bps`, rounded to the nearest nanosecond.
pub fn estimate_delay(queue_bytes: u64, drain_rate_bps: u64) -> Duration {
    assert!(drain_rate_bps > 0, "drain rate must be positive");
    let bits = u128::from(queue_bytes) * 8;
    let rate = u128::from(drain_rate_bps);
    let ns = (bits * 1_000_000_000 + rate / 2) / rate;
    Duration::from_nanos(u64::try_from(ns).unwrap_or(u64::MAX))
}

/// Signed difference `a - b` in seconds, computed from integer nanoseconds.
fn diff_secs(a: Duration, b: Duration) -> f64 {
    let a = a.as_nanos() as i128;
    let b = b.as_nanos() as i128;
    (a - b) as f64 / 1e9
}

/// Gain multiplier applied while the drop probability is small.
pub fn range_scale(p_drop: f64) -> f64 {
    if p_drop < 0.01 {
        0.125
    } else if p_drop < 0.1 {
        0.5
    } else {
        1.0
    }
}

/// One step of the drop-probability controller:
/// `p + alpha*(delay - target) + beta*(delay - delay_old)`, clamped to [0, 1].
pub fn next_drop_probability(
    p_drop: f64,
    est_delay: Duration,
    est_delay_old: Duration,
    cfg: &PieConfig,
) -> f64 {
    let scale = if cfg.range_scaling {
        range_scale(p_drop)
    } else {
        1.0
    };
    let alpha = cfg.alpha * scale;
    let beta = cfg.beta * scale;
    let p = p_drop + alpha * diff_secs(est_delay, cfg.target) + beta * diff_secs(est_delay, est_delay_old);
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieState {
    pub p_drop: f64,
    pub est_delay: Duration,
    pub est_delay_old: Duration,
    pub burst_remaining: Duration,
    pub queue_bytes: u64,
}

impl PieState {
    pub fn new(cfg: &PieConfig) -> Self {
        PieState {
            p_drop: 0.0,
            est_delay: Duration::ZERO,
            est_delay_old: Duration::ZERO,
            burst_remaining: cfg.max_burst,
            queue_bytes: 0,
        }
    }

    /// Periodic controller update. `est_delay` must already hold the
    /// estimate for this tick.
    pub fn update(&mut self, cfg: &PieConfig) {
        self.p_drop = next_drop_probability(self.p_drop, self.est_delay, self.est_delay_old, cfg);

        let half_target = cfg.target / 2;
        if self.p_drop == 0.0 && self.est_delay < half_target && self.est_delay_old < half_target
        {
            self.burst_remaining = cfg.max_burst;
        } else {
            self.burst_remaining = self.burst_remaining.saturating_sub(cfg.update_interval);
        }
        self.est_delay_old = self.est_delay;
    }

    /// Admission decision for an arriving packet of `size` bytes. `u` is a
    /// uniform draw in (0, 1].
    pub fn enqueue_decision(&mut self, size: u32, capacity_bytes: u64, u: f64) -> Decision {
        if self.queue_bytes + u64::from(size) > capacity_bytes {
            return Decision::Drop(DropCause::BufferOverflow);
        }
        if self.burst_remaining.is_zero() && u <= self.p_drop {
            return Decision::Drop(DropCause::RandomDrop);
        }
        self.queue_bytes += u64::from(size);
        Decision::Enqueue
    }

    pub fn on_dequeue(&mut self, size: u32) {
        debug_assert!(self.queue_bytes >= u64::from(size));
        self.queue_bytes -= u64::from(size);
    }
}

/// Departure-rate measurement in the style of deployed PIE: a measurement
/// cycle starts once the backlog exceeds `threshold` bytes and ends after
/// that many bytes have departed; the cycle's rate feeds an EWMA.
#[derive(Debug, Clone, PartialEq)]
pub struct DepartureRateMeter {
    threshold: u64,
    cycle_start: Option<SimTime>,
    cycle_bytes: u64,
    avg_bytes_per_sec: Option<f64>,
}

impl Default for DepartureRateMeter {
    fn default() -> Self {
        DepartureRateMeter::new(16 * 1024)
    }
}

impl DepartureRateMeter {
    pub fn new(threshold: u64) -> Self {
        DepartureRateMeter {
            threshold,
            cycle_start: None,
            cycle_bytes: 0,
            avg_bytes_per_sec: None,
        }
    }

    /// Records a departure of `size` bytes leaving `backlog_after` behind.
    pub fn on_departure(&mut self, size: u32, backlog_after: u64, now: SimTime) {
        match self.cycle_start {
            None => {
                if backlog_after + u64::from(size) >= self.threshold {
                    self.cycle_start = Some(now);
                    self.cycle_bytes = 0;
                }
            }
            Some(start) => {
                self.cycle_bytes += u64::from(size);
                if self.cycle_bytes >= self.threshold {
                    let elapsed = now.saturating_since(start).as_secs_f64();
                    if elapsed > 0.0 {
                        let rate = self.cycle_bytes as f64 / elapsed;
                        self.avg_bytes_per_sec = Some(match self.avg_bytes_per_sec {
                            Some(avg) => 0.875 * avg + 0.125 * rate,
                            None => rate,
                        });
                    }
                    self.cycle_start = None;
                }
            }
        }
    }

    pub fn rate_bytes_per_sec(&self) -> Option<f64> {
        self.avg_bytes_per_sec
    }

    /// Delay estimate from the measured rate; `None` until one cycle completed.
    pub fn estimate(&self, queue_bytes: u64) -> Option<Duration> {
        self.avg_bytes_per_sec
            .map(|rate| Duration::from_secs_f64(queue_bytes as f64 / rate))
    }
}
