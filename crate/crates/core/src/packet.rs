use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

/// Identifies an application flow (one CBR source, one short-file client or
/// one bulk transfer). Short-file clients open many connections over a run;
/// they all share the client's `FlowId`.
pub type FlowId = u32;

/// Index of a TCP connection inside a simulation.
pub type ConnId = u32;

/// Index of a path (ordered list of links) inside a simulation.
pub type PathId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    Cbr,
    #[serde(rename = "sf")]
    ShortFile,
    #[serde(rename = "ftp")]
    Bulk,
}

impl TrafficClass {
    pub fn label(self) -> &'static str {
        match self {
            TrafficClass::Cbr => "cbr",
            TrafficClass::ShortFile => "sf",
            TrafficClass::Bulk => "ftp",
        }
    }
}

/// Reporting class: application type plus the base RTT of its path, printed
/// as e.g. `cbr-100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassKey {
    pub class: TrafficClass,
    pub rtt_ms: u32,
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.class.label(), self.rtt_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    /// TCP data segment. `seq` counts segments, not bytes.
    Data {
        conn: ConnId,
        seq: u32,
        /// Per-connection transmission counter; retransmissions get a fresh one.
        xmit: u64,
        payload: u32,
    },
    /// Cumulative ACK plus selective acknowledgement of the segment that
    /// triggered it.
    Ack {
        conn: ConnId,
        cum_ack: u32,
        sacked: u32,
        echo_xmit: u64,
        echo_sent_at: SimTime,
    },
    /// Unreliable constant-bit-rate datagram.
    Datagram { seq: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub flow: FlowId,
    /// Bytes on the wire.
    pub size: u32,
    pub kind: PacketKind,
    /// When the source emitted the packet.
    pub sent_at: SimTime,
    /// Stamped by a queue on admission.
    pub enqueue_ts: SimTime,
    pub path: PathId,
    pub hop: u8,
}

impl Packet {
    pub fn new(id: u64, flow: FlowId, size: u32, kind: PacketKind, now: SimTime) -> Self {
        Packet {
            id,
            flow,
            size,
            kind,
            sent_at: now,
            enqueue_ts: now,
            path: 0,
            hop: 0,
        }
    }

    /// Application bytes carried (CBR datagrams count their full size).
    pub fn payload(&self) -> u32 {
        match self.kind {
            PacketKind::Data { payload, .. } => payload,
            PacketKind::Ack { .. } => 0,
            PacketKind::Datagram { .. } => self.size,
        }
    }
}
