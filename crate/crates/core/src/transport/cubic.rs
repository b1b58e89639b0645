//! CUBIC window growth.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::units::serde_duration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcpConfig {
    /// Initial congestion window, in segments.
    pub initial_window: u32,
    /// Payload bytes per segment.
    pub mss: u32,
    /// TCP/IP header bytes added on the wire.
    pub header_bytes: u32,
    pub cubic_c: f64,
    /// Multiplicative-decrease factor.
    pub cubic_beta: f64,
    #[serde(with = "serde_duration")]
    pub min_rto: Duration,
    #[serde(with = "serde_duration")]
    pub initial_rto: Duration,
    #[serde(with = "serde_duration")]
    pub max_rto: Duration,
    pub dupack_threshold: u32,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            initial_window: 10,
            mss: 1460,
            header_bytes: 40,
            cubic_c: 0.4,
            cubic_beta: 0.7,
            min_rto: Duration::from_millis(200),
            initial_rto: Duration::from_secs(1),
            max_rto: Duration::from_secs(60),
            dupack_threshold: 3,
        }
    }
}

impl TcpConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.initial_window == 0 {
            return Err("initial window must be at least one segment".into());
        }
        if self.mss == 0 {
            return Err("MSS must be positive".into());
        }
        if !(self.cubic_beta > 0.0 && self.cubic_beta < 1.0) {
            return Err(format!("CUBIC beta must lie in (0, 1), got {}", self.cubic_beta));
        }
        if !(self.cubic_c > 0.0 && self.cubic_c.is_finite()) {
            return Err(format!("CUBIC C must be positive, got {}", self.cubic_c));
        }
        if self.min_rto.is_zero() || self.initial_rto < self.min_rto || self.max_rto < self.initial_rto {
            return Err("RTO bounds must satisfy 0 < min <= initial <= max".into());
        }
        if self.dupack_threshold == 0 {
            return Err("dupack threshold must be positive".into());
        }
        Ok(())
    }

    /// Bytes on the wire for a segment carrying `payload` bytes.
    pub fn wire_size(&self, payload: u32) -> u32 {
        payload + self.header_bytes
    }

    /// Additive increase of the Reno-friendly estimate, per window of ACKs.
    pub fn reno_friendly_gain(&self) -> f64 {
        3.0 * (1.0 - self.cubic_beta) / (1.0 + self.cubic_beta)
    }
}

/// Time for the cubic curve to climb from `beta * w_max` back to `w_max`.
pub fn cubic_k(w_max: f64, cfg: &TcpConfig) -> f64 {
    (w_max * (1.0 - cfg.cubic_beta) / cfg.cubic_c).cbrt()
}

/// `C * (t - K)^3 + w_max`, in segments, with `t` measured from the start of
/// the congestion-avoidance epoch that followed a reduction from `w_max`.
pub fn cubic_window(t_since_epoch: Duration, w_max: f64, cfg: &TcpConfig) -> f64 {
    let t = t_since_epoch.as_secs_f64();
    let k = cubic_k(w_max, cfg);
    cfg.cubic_c * (t - k).powi(3) + w_max
}

/// Shape of the cubic curve for the current congestion-avoidance epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicEpoch {
    /// Seconds until the curve reaches `origin`.
    pub k: f64,
    /// Plateau of the curve, in segments.
    pub origin: f64,
}

impl CubicEpoch {
    /// Starts an epoch at window `cwnd` after the last reduction from `w_max`.
    pub fn new(cwnd: f64, w_max: f64, cfg: &TcpConfig) -> Self {
        if cwnd < w_max {
            CubicEpoch {
                k: ((w_max - cwnd) / cfg.cubic_c).cbrt(),
                origin: w_max,
            }
        } else {
            CubicEpoch { k: 0.0, origin: cwnd }
        }
    }

    pub fn window_at(&self, t_secs: f64, cfg: &TcpConfig) -> f64 {
        cfg.cubic_c * (t_secs - self.k).powi(3) + self.origin
    }
}
