use std::collections::VecDeque;
use std::time::Duration;

use crate::aqm::{AqmQueue, QueueCounters};
use crate::engine::SimTime;
use crate::packet::Packet;

/// Time to clock `size` bytes onto a link, rounded to the nearest ns.
pub fn serialization_time(size: u32, rate_bps: u64) -> Duration {
    assert!(rate_bps > 0, "link rate must be positive");
    let bits = u128::from(size) * 8;
    let rate = u128::from(rate_bps);
    let ns = (bits * 1_000_000_000 + rate / 2) / rate;
    Duration::from_nanos(u64::try_from(ns).expect("serialization time fits u64"))
}

/// Unlimited FIFO whose departures follow from arrivals alone: each packet
/// starts serializing when the previous one is done.
#[derive(Debug, Clone, Default)]
pub struct FifoLine {
    free_at: SimTime,
    /// Start-of-service times of packets still waiting.
    waiting: VecDeque<SimTime>,
    counters: QueueCounters,
}

impl FifoLine {
    /// Books `size` bytes arriving at `now`; returns when the last bit
    /// leaves the sender side of the link.
    pub fn admit(&mut self, now: SimTime, size: u32, rate_bps: u64) -> SimTime {
        self.settle(now);
        let start = self.free_at.max(now);
        self.free_at = start + serialization_time(size, rate_bps);
        self.counters.arrivals += 1;
        self.counters.enqueued += 1;
        if start > now {
            self.waiting.push_back(start);
        } else {
            self.counters.departed += 1;
        }
        self.free_at
    }

    fn settle(&mut self, now: SimTime) {
        while self.waiting.front().is_some_and(|&t| t <= now) {
            self.waiting.pop_front();
            self.counters.departed += 1;
        }
    }

    pub fn counters(&mut self, now: SimTime) -> QueueCounters {
        self.settle(now);
        QueueCounters {
            resident: self.waiting.len() as u64,
            ..self.counters
        }
    }
}

#[derive(Debug, Clone)]
pub enum LinkQueue {
    Fifo(FifoLine),
    Managed {
        queue: AqmQueue,
        in_service: Option<Packet>,
    },
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    pub rate_bps: u64,
    pub owd: Duration,
    pub queue: LinkQueue,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_examples() {
        assert_eq!(serialization_time(1500, 10_000_000), Duration::from_micros(1200));
        assert_eq!(serialization_time(1500, 100_000_000), Duration::from_micros(120));
        assert_eq!(serialization_time(40, 10_000_000), Duration::from_micros(32));
    }

    #[test]
    fn back_to_back_packets_leave_one_serialization_apart() {
        let mut line = FifoLine::default();
        let t0 = SimTime::from_millis(5);
        let ends: Vec<SimTime> = (0..4).map(|_| line.admit(t0, 1500, 10_000_000)).collect();
        for pair in ends.windows(2) {
            assert_eq!(pair[1] - pair[0], Duration::from_micros(1200));
        }
        assert_eq!(ends[0], t0 + Duration::from_micros(1200));
        let c = line.counters(t0);
        assert_eq!((c.departed, c.resident), (1, 3));
        assert!(c.is_conserved());
        let c = line.counters(SimTime::from_secs(1));
        assert_eq!((c.departed, c.resident), (4, 0));
    }

    #[test]
    fn idle_link_starts_immediately() {
        let mut line = FifoLine::default();
        line.admit(SimTime::ZERO, 1500, 10_000_000);
        let t = SimTime::from_millis(10);
        assert_eq!(line.admit(t, 1500, 10_000_000), t + Duration::from_micros(1200));
    }
}
