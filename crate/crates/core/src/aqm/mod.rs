//! Bottleneck queue disciplines: DropTail, PIE, MADPIE and CoDel.
//!
//! Each discipline is a small state machine with pure decision functions in
//! its own module. [`AqmQueue`] wraps one of them around a byte-accounted
//! FIFO and is what the network layer drives.

pub mod codel;
pub mod droptail;
pub mod madpie;
pub mod pie;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::packet::{FlowId, Packet};

pub use codel::{CodelConfig, CodelState};
pub use madpie::{MadpieConfig, MadpieState};
pub use pie::{DelayEstimator, PieConfig, PieState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropCause {
    RandomDrop,
    DeterministicDrop,
    BufferOverflow,
    CodelDrop,
}

impl DropCause {
    pub const ALL: [DropCause; 4] = [
        DropCause::DeterministicDrop,
        DropCause::RandomDrop,
        DropCause::BufferOverflow,
        DropCause::CodelDrop,
    ];

    /// Short tag used in CSV output and summary keys.
    pub fn tag(self) -> &'static str {
        match self {
            DropCause::RandomDrop => "RD",
            DropCause::DeterministicDrop => "DD",
            DropCause::BufferOverflow => "BO",
            DropCause::CodelDrop => "CoDel",
        }
    }

    pub fn from_tag(tag: &str) -> Option<DropCause> {
        DropCause::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Enqueue,
    Drop(DropCause),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropRecord {
    pub at: SimTime,
    pub cause: DropCause,
    /// Enqueue-side drops: backlog delay the packet would have faced.
    /// Head drops: the packet's sojourn.
    pub queuing_delay_at_drop: Duration,
    pub flow: FlowId,
    /// Number of controller update ticks processed before the drop.
    pub update_epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AqmKind {
    #[serde(rename = "dt", alias = "droptail")]
    DropTail,
    #[serde(rename = "pie")]
    Pie,
    #[serde(rename = "madpie")]
    Madpie,
    #[serde(rename = "codel")]
    Codel,
}

impl AqmKind {
    pub const ALL: [AqmKind; 4] = [AqmKind::DropTail, AqmKind::Pie, AqmKind::Madpie, AqmKind::Codel];

    pub fn name(self) -> &'static str {
        match self {
            AqmKind::DropTail => "dt",
            AqmKind::Pie => "pie",
            AqmKind::Madpie => "madpie",
            AqmKind::Codel => "codel",
        }
    }
}

impl fmt::Display for AqmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AqmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dt" | "droptail" => Ok(AqmKind::DropTail),
            "pie" => Ok(AqmKind::Pie),
            "madpie" => Ok(AqmKind::Madpie),
            "codel" => Ok(AqmKind::Codel),
            other => Err(format!("unknown AQM `{other}` (expected dt, pie, madpie or codel)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AqmConfig {
    DropTail,
    Pie(PieConfig),
    Madpie(MadpieConfig),
    Codel(CodelConfig),
}

impl AqmConfig {
    pub fn kind(&self) -> AqmKind {
        match self {
            AqmConfig::DropTail => AqmKind::DropTail,
            AqmConfig::Pie(_) => AqmKind::Pie,
            AqmConfig::Madpie(_) => AqmKind::Madpie,
            AqmConfig::Codel(_) => AqmKind::Codel,
        }
    }
}

/// FIFO of packets with a running byte count.
#[derive(Debug, Clone, Default)]
pub struct PacketFifo {
    packets: VecDeque<Packet>,
    bytes: u64,
}

impl PacketFifo {
    pub fn push(&mut self, pkt: Packet) {
        self.bytes += u64::from(pkt.size);
        self.packets.push_back(pkt);
    }

    pub fn pop(&mut self) -> Option<Packet> {
        let pkt = self.packets.pop_front()?;
        self.bytes -= u64::from(pkt.size);
        Some(pkt)
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// Packet accounting for one queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueCounters {
    pub arrivals: u64,
    pub enqueued: u64,
    pub enqueue_drops: u64,
    pub departed: u64,
    pub head_drops: u64,
    pub resident: u64,
}

impl QueueCounters {
    pub fn dropped(&self) -> u64 {
        self.enqueue_drops + self.head_drops
    }

    /// Every arrival is accounted for exactly once, and every admitted packet
    /// has either left, been dropped from the head, or is still queued.
    pub fn is_conserved(&self) -> bool {
        self.arrivals == self.enqueued + self.enqueue_drops
            && self.enqueued == self.departed + self.head_drops + self.resident
    }
}

#[derive(Debug, Clone)]
enum Discipline {
    DropTail,
    Pie {
        cfg: PieConfig,
        state: PieState,
        meter: Option<pie::DepartureRateMeter>,
    },
    Madpie {
        cfg: MadpieConfig,
        state: MadpieState,
        meter: Option<pie::DepartureRateMeter>,
    },
    Codel {
        cfg: CodelConfig,
        state: CodelState,
        scratch: Vec<codel::HeadDrop>,
    },
}

fn meter_for(cfg: &PieConfig) -> Option<pie::DepartureRateMeter> {
    match cfg.estimator {
        DelayEstimator::Backlog => None,
        DelayEstimator::DepartureRate => Some(pie::DepartureRateMeter::default()),
    }
}

/// A byte-limited bottleneck buffer governed by one discipline.
#[derive(Debug, Clone)]
pub struct AqmQueue {
    fifo: PacketFifo,
    capacity_bytes: u64,
    drain_rate_bps: u64,
    discipline: Discipline,
    counters: QueueCounters,
    update_epoch: u64,
}

impl AqmQueue {
    pub fn new(cfg: AqmConfig, capacity_bytes: u64, drain_rate_bps: u64) -> Self {
        assert!(drain_rate_bps > 0, "drain rate must be positive");
        let discipline = match cfg {
            AqmConfig::DropTail => Discipline::DropTail,
            AqmConfig::Pie(cfg) => Discipline::Pie {
                state: PieState::new(&cfg),
                meter: meter_for(&cfg),
                cfg,
            },
            AqmConfig::Madpie(cfg) => Discipline::Madpie {
                state: MadpieState::new(&cfg),
                meter: meter_for(&cfg.pie),
                cfg,
            },
            AqmConfig::Codel(cfg) => Discipline::Codel {
                cfg,
                state: CodelState::new(),
                scratch: Vec::new(),
            },
        };
        AqmQueue {
            fifo: PacketFifo::default(),
            capacity_bytes,
            drain_rate_bps,
            discipline,
            counters: QueueCounters::default(),
            update_epoch: 0,
        }
    }

    pub fn kind(&self) -> AqmKind {
        match self.discipline {
            Discipline::DropTail => AqmKind::DropTail,
            Discipline::Pie { .. } => AqmKind::Pie,
            Discipline::Madpie { .. } => AqmKind::Madpie,
            Discipline::Codel { .. } => AqmKind::Codel,
        }
    }

    /// Cadence of periodic controller updates, if the discipline has any.
    pub fn update_interval(&self) -> Option<Duration> {
        match &self.discipline {
            Discipline::Pie { cfg, .. } => Some(cfg.update_interval),
            Discipline::Madpie { cfg, .. } => Some(cfg.pie.update_interval),
            _ => None,
        }
    }

    /// Whether `enqueue` consumes a uniform draw.
    pub fn uses_random_draws(&self) -> bool {
        matches!(self.discipline, Discipline::Pie { .. } | Discipline::Madpie { .. })
    }

    pub fn bytes(&self) -> u64 {
        self.fifo.bytes()
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn update_epoch(&self) -> u64 {
        self.update_epoch
    }

    pub fn counters(&self) -> QueueCounters {
        QueueCounters {
            resident: self.fifo.len() as u64,
            ..self.counters
        }
    }

    pub fn pie_state(&self) -> Option<&PieState> {
        match &self.discipline {
            Discipline::Pie { state, .. } => Some(state),
            Discipline::Madpie { state, .. } => Some(&state.pie),
            _ => None,
        }
    }

    pub fn madpie_state(&self) -> Option<&MadpieState> {
        match &self.discipline {
            Discipline::Madpie { state, .. } => Some(state),
            _ => None,
        }
    }

    pub fn codel_state(&self) -> Option<&CodelState> {
        match &self.discipline {
            Discipline::Codel { state, .. } => Some(state),
            _ => None,
        }
    }

    /// Offers `pkt` to the queue. `u` is a uniform draw in (0, 1], ignored
    /// by disciplines without random drops.
    pub fn enqueue(&mut self, mut pkt: Packet, now: SimTime, u: f64) -> Result<(), DropRecord> {
        self.counters.arrivals += 1;
        let decision = match &mut self.discipline {
            Discipline::DropTail | Discipline::Codel { .. } => {
                droptail::enqueue_decision(self.fifo.bytes(), pkt.size, self.capacity_bytes)
            }
            Discipline::Pie { state, .. } => {
                debug_assert_eq!(state.queue_bytes, self.fifo.bytes());
                state.enqueue_decision(pkt.size, self.capacity_bytes, u)
            }
            Discipline::Madpie { state, .. } => {
                debug_assert_eq!(state.pie.queue_bytes, self.fifo.bytes());
                state.enqueue_decision(pkt.size, self.capacity_bytes, u)
            }
        };
        match decision {
            Decision::Enqueue => {
                pkt.enqueue_ts = now;
                self.fifo.push(pkt);
                self.counters.enqueued += 1;
                Ok(())
            }
            Decision::Drop(cause) => {
                self.counters.enqueue_drops += 1;
                Err(DropRecord {
                    at: now,
                    cause,
                    queuing_delay_at_drop: pie::estimate_delay(
                        self.fifo.bytes(),
                        self.drain_rate_bps,
                    ),
                    flow: pkt.flow,
                    update_epoch: self.update_epoch,
                })
            }
        }
    }

    /// Pulls the next packet for transmission. Head drops (CoDel) are
    /// appended to `drops`.
    pub fn dequeue(&mut self, now: SimTime, drops: &mut Vec<DropRecord>) -> Option<Packet> {
        let epoch = self.update_epoch;
        let pkt = match &mut self.discipline {
            Discipline::DropTail => self.fifo.pop(),
            Discipline::Pie { state, meter, .. } => {
                let pkt = self.fifo.pop();
                if let Some(p) = &pkt {
                    state.on_dequeue(p.size);
                    if let Some(m) = meter {
                        m.on_departure(p.size, self.fifo.bytes(), now);
                    }
                }
                pkt
            }
            Discipline::Madpie { state, meter, .. } => {
                let pkt = self.fifo.pop();
                if let Some(p) = &pkt {
                    state.pie.on_dequeue(p.size);
                    if let Some(m) = meter {
                        m.on_departure(p.size, self.fifo.bytes(), now);
                    }
                }
                pkt
            }
            Discipline::Codel {
                cfg,
                state,
                scratch,
            } => {
                scratch.clear();
                let pkt = state.dequeue(cfg, &mut self.fifo, now, scratch);
                self.counters.head_drops += scratch.len() as u64;
                drops.extend(scratch.iter().map(|d| DropRecord {
                    at: now,
                    cause: DropCause::CodelDrop,
                    queuing_delay_at_drop: d.sojourn,
                    flow: d.packet.flow,
                    update_epoch: epoch,
                }));
                pkt
            }
        };
        if pkt.is_some() {
            self.counters.departed += 1;
        }
        pkt
    }

    /// Periodic controller update for PIE and MADPIE; a no-op otherwise.
    pub fn on_update_tick(&mut self) {
        let backlog = self.fifo.bytes();
        let rate = self.drain_rate_bps;
        let estimate = |meter: &Option<pie::DepartureRateMeter>| {
            meter
                .as_ref()
                .and_then(|m| m.estimate(backlog))
                .unwrap_or_else(|| pie::estimate_delay(backlog, rate))
        };
        match &mut self.discipline {
            Discipline::Pie { cfg, state, meter } => {
                state.est_delay = estimate(meter);
                state.update(cfg);
            }
            Discipline::Madpie { cfg, state, meter } => {
                state.pie.est_delay = estimate(meter);
                state.update(cfg);
            }
            Discipline::DropTail | Discipline::Codel { .. } => return,
        }
        self.update_epoch += 1;
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::packet::PacketKind;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Op {
        Arrive { size: u32, u: f64 },
        Depart,
        Tick,
        Wait(u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (40u32..=1500, 0.000_001f64..=1.0).prop_map(|(size, u)| Op::Arrive { size, u }),
            3 => Just(Op::Depart),
            1 => Just(Op::Tick),
            1 => (0u64..50_000_000).prop_map(Op::Wait),
        ]
    }

    fn configs() -> Vec<AqmConfig> {
        let mut madpie = MadpieConfig::default();
        madpie.tau_dd = Some(Duration::from_millis(5));
        vec![
            AqmConfig::DropTail,
            AqmConfig::Pie(PieConfig::default()),
            AqmConfig::Madpie(madpie),
            AqmConfig::Codel(CodelConfig::default()),
        ]
    }

    proptest! {
        #[test]
        fn every_discipline_conserves_packets(ops in proptest::collection::vec(op(), 1..600)) {
            for cfg in configs() {
                let mut q = AqmQueue::new(cfg, 30_000, 10_000_000);
                let mut now = SimTime::ZERO;
                let mut drops = Vec::new();
                let mut last_dd_epoch = None;
                for (id, op) in ops.iter().enumerate() {
                    match *op {
                        Op::Arrive { size, u } => {
                            let p = Packet::new(id as u64, 1, size, PacketKind::Datagram { seq: 0 }, now);
                            if let Err(d) = q.enqueue(p, now, u) {
                                drops.push(d);
                            }
                        }
                        Op::Depart => {
                            q.dequeue(now, &mut drops);
                        }
                        Op::Tick => q.on_update_tick(),
                        Op::Wait(ns) => now += Duration::from_nanos(ns),
                    }
                    let c = q.counters();
                    prop_assert!(c.is_conserved(), "{c:?}");
                    prop_assert_eq!(c.dropped(), drops.len() as u64);
                    prop_assert!(q.bytes() <= q.capacity_bytes());
                    if let Some(s) = q.pie_state() {
                        prop_assert!((0.0..=1.0).contains(&s.p_drop));
                    }
                }
                for d in drops.iter().filter(|d| d.cause == DropCause::DeterministicDrop) {
                    prop_assert!(last_dd_epoch.is_none_or(|e| d.update_epoch > e));
                    last_dd_epoch = Some(d.update_epoch);
                }
            }
        }
    }
}
