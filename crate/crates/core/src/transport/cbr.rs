//! Constant-bit-rate datagram sources.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbrSpec {
    pub rate_bps: u64,
    /// Wire bytes per datagram.
    pub packet_size: u32,
}

impl Default for CbrSpec {
    fn default() -> Self {
        CbrSpec {
            rate_bps: 87_000,
            packet_size: 218,
        }
    }
}

impl CbrSpec {
    /// Inter-departure gap, rounded to the nearest nanosecond.
    pub fn gap(&self) -> Duration {
        assert!(self.rate_bps > 0, "CBR rate must be positive");
        let bits = u128::from(self.packet_size) * 8;
        let rate = u128::from(self.rate_bps);
        let ns = (bits * 1_000_000_000 + rate / 2) / rate;
        Duration::from_nanos(u64::try_from(ns).expect("gap overflows u64 nanoseconds"))
    }

    pub fn next_departure(&self, last: SimTime) -> SimTime {
        last + self.gap()
    }
}
