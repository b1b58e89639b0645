//! Short-file download clients: pick a size, download it over a fresh
//! connection, think for an exponentially distributed time, repeat.

use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::units::serde_duration;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortFlowSpec {
    /// Candidate file sizes in bytes, drawn uniformly.
    pub sizes: Vec<u32>,
    #[serde(with = "serde_duration")]
    pub think_time_mean: Duration,
}

impl Default for ShortFlowSpec {
    fn default() -> Self {
        ShortFlowSpec {
            sizes: vec![15_000, 44_000, 73_000, 102_000],
            think_time_mean: Duration::from_millis(9_500),
        }
    }
}

impl ShortFlowSpec {
    pub fn draw_size<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.sizes[rng.random_range(0..self.sizes.len())]
    }

    pub fn draw_think_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        let mean = self.think_time_mean.as_secs_f64();
        if mean <= 0.0 {
            return Duration::ZERO;
        }
        let exp = Exp::new(1.0 / mean).expect("positive rate");
        Duration::from_secs_f64(exp.sample(rng))
    }
}

/// Outcome of one download.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DownloadRecord {
    pub flow: crate::packet::FlowId,
    pub size_bytes: u32,
    pub requested_at: crate::engine::SimTime,
    /// Request to last byte delivered; `None` if the run ended first.
    pub duration: Option<Duration>,
}
