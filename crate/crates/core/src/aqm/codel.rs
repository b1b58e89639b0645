//! CoDel head-drop control law.
//!
//! A packet becomes droppable once its sojourn time has stayed at or above
//! `target` (with more than one MTU backlogged) for a full `interval`. While
//! in the dropping state, drops are spaced `interval / sqrt(count)` apart.
//! Spacings are rounded to the nearest nanosecond.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PacketFifo;
use crate::engine::SimTime;
use crate::packet::Packet;
use crate::units::serde_duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodelConfig {
    #[serde(with = "serde_duration")]
    pub target: Duration,
    #[serde(with = "serde_duration")]
    pub interval: Duration,
    /// Backlog at or below this many bytes never counts as "above target".
    pub mtu: u32,
}

impl Default for CodelConfig {
    fn default() -> Self {
        CodelConfig {
            target: Duration::from_millis(5),
            interval: Duration::from_millis(100),
            mtu: 1500,
        }
    }
}

impl CodelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.target.is_zero() || self.interval.is_zero() {
            return Err("CoDel target and interval must be positive".into());
        }
        if self.target >= self.interval {
            return Err(format!(
                "CoDel target {:?} must be below interval {:?}",
                self.target, self.interval
            ));
        }
        Ok(())
    }
}

/// `interval / sqrt(count)`, rounded to the nearest nanosecond.
pub fn drop_spacing(interval: Duration, count: u32) -> Duration {
    let count = count.max(1);
    let ns = interval.as_nanos() as f64 / f64::from(count).sqrt();
    Duration::from_nanos(ns.round() as u64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodelState {
    pub dropping: bool,
    pub drop_count: u32,
    last_count: u32,
    pub next_drop_at: SimTime,
    /// Instant at which an uninterrupted above-target episode becomes
    /// droppable; `None` while below target.
    pub first_above_at: Option<SimTime>,
}

/// A packet dropped at the head of the queue and the sojourn it had.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDrop {
    pub packet: Packet,
    pub sojourn: Duration,
}

impl CodelState {
    pub fn new() -> Self {
        Self::default()
    }

    fn do_dequeue(
        &mut self,
        cfg: &CodelConfig,
        queue: &mut PacketFifo,
        now: SimTime,
    ) -> Option<(Packet, Duration, bool)> {
        let Some(pkt) = queue.pop() else {
            self.first_above_at = None;
            return None;
        };
        let sojourn = now.saturating_since(pkt.enqueue_ts);
        let mut ok_to_drop = false;
        if sojourn < cfg.target || queue.bytes() <= u64::from(cfg.mtu) {
            self.first_above_at = None;
        } else {
            match self.first_above_at {
                None => self.first_above_at = Some(now + cfg.interval),
                Some(at) => ok_to_drop = now >= at,
            }
        }
        Some((pkt, sojourn, ok_to_drop))
    }

    /// Pulls the next packet to transmit, dropping head packets as the
    /// control law demands. Drops are appended to `dropped`.
    pub fn dequeue(
        &mut self,
        cfg: &CodelConfig,
        queue: &mut PacketFifo,
        now: SimTime,
        dropped: &mut Vec<HeadDrop>,
    ) -> Option<Packet> {
        let Some((mut pkt, mut sojourn, mut ok_to_drop)) = self.do_dequeue(cfg, queue, now) else {
            self.dropping = false;
            return None;
        };

        if self.dropping {
            if !ok_to_drop {
                self.dropping = false;
            }
            while self.dropping && now >= self.next_drop_at {
                dropped.push(HeadDrop { packet: pkt, sojourn });
                self.drop_count += 1;
                match self.do_dequeue(cfg, queue, now) {
                    None => {
                        self.dropping = false;
                        return None;
                    }
                    Some((p, s, ok)) => {
                        (pkt, sojourn, ok_to_drop) = (p, s, ok);
                        if ok_to_drop {
                            self.next_drop_at =
                                self.next_drop_at + drop_spacing(cfg.interval, self.drop_count);
                        } else {
                            self.dropping = false;
                        }
                    }
                }
            }
        } else if ok_to_drop {
            dropped.push(HeadDrop { packet: pkt, sojourn });
            let next = self.do_dequeue(cfg, queue, now);
            self.dropping = true;
            let delta = self.drop_count.saturating_sub(self.last_count);
            let recently = now.saturating_since(self.next_drop_at) < cfg.interval * 16;
            self.drop_count = if delta > 1 && recently { delta } else { 1 };
            self.next_drop_at = now + drop_spacing(cfg.interval, self.drop_count);
            self.last_count = self.drop_count;
            match next {
                None => return None,
                Some((p, _, _)) => pkt = p,
            }
        }
        Some(pkt)
    }
}
