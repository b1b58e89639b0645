//! Segment-granular TCP with SACK-based loss detection and CUBIC congestion
//! control.
//!
//! The sender is sans-IO: the network layer calls [`TcpSender::poll_transmit`]
//! to pull segments, feeds ACKs through [`TcpSender::on_ack`], and keeps one
//! retransmission timer armed at [`TcpSender::rto_deadline`].
//!
//! Loss detection works on transmission order. Every transmission gets a
//! fresh `xmit` number; an outstanding transmission is declared lost once a
//! transmission at least `dupack_threshold` numbers later has been
//! acknowledged. Links never reorder, so this also catches lost
//! retransmissions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use super::cubic::{CubicEpoch, TcpConfig};
use crate::engine::SimTime;

/// What the receiver reports back for one data segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckInfo {
    /// Next segment expected in order.
    pub cum_ack: u32,
    /// The segment that triggered this ACK.
    pub sacked: u32,
    pub echo_xmit: u64,
    pub echo_sent_at: SimTime,
}

/// A segment the sender wants on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub seq: u32,
    pub xmit: u64,
    pub payload: u32,
    pub retransmit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CongestionState {
    Open,
    /// Fast recovery after SACK-detected loss.
    Recovery,
    /// Recovery after a retransmission timeout.
    Loss,
}

#[derive(Debug, Clone, Copy)]
struct SegState {
    xmit: u64,
    sacked: bool,
    lost: bool,
}

#[derive(Debug, Clone)]
pub struct TcpSender {
    cfg: TcpConfig,
    /// Total segments to send; `None` for an endless bulk transfer.
    total_segments: Option<u32>,
    /// Payload of the final segment of a finite transfer.
    last_payload: u32,

    pub cwnd: f64,
    pub ssthresh: f64,
    pub w_max: f64,
    pub epoch_start: Option<SimTime>,
    epoch: Option<CubicEpoch>,
    reno_estimate: f64,
    pub srtt: Option<Duration>,
    pub rttvar: Duration,
    min_rtt: Option<Duration>,
    backoff: u32,
    pub state: CongestionState,
    recovery_point: u32,
    reductions: u32,

    snd_una: u32,
    snd_nxt: u32,
    segs: VecDeque<SegState>,
    /// Outstanding, un-SACKed, not-yet-declared-lost transmissions by xmit.
    in_flight: BTreeMap<u64, u32>,
    /// Segments declared lost, waiting for retransmission.
    lost: BTreeSet<u32>,
    next_xmit: u64,
    highest_delivered_xmit: Option<u64>,
    pub highest_sacked: Option<u32>,
    rto_deadline: Option<SimTime>,
    retransmissions: u64,
    timeouts: u64,
}

impl TcpSender {
    /// A sender for `total_bytes` of payload, or an endless one for `None`.
    pub fn new(cfg: TcpConfig, total_bytes: Option<u64>) -> Self {
        let (total_segments, last_payload) = match total_bytes {
            None => (None, cfg.mss),
            Some(bytes) => {
                let mss = u64::from(cfg.mss);
                let segs = bytes.div_ceil(mss).max(1);
                let last = bytes - (segs - 1) * mss;
                (
                    Some(u32::try_from(segs).expect("transfer too large")),
                    u32::try_from(last.max(1)).unwrap(),
                )
            }
        };
        TcpSender {
            cwnd: f64::from(cfg.initial_window),
            ssthresh: f64::INFINITY,
            w_max: 0.0,
            epoch_start: None,
            epoch: None,
            reno_estimate: 0.0,
            srtt: None,
            rttvar: Duration::ZERO,
            min_rtt: None,
            backoff: 0,
            state: CongestionState::Open,
            recovery_point: 0,
            reductions: 0,
            snd_una: 0,
            snd_nxt: 0,
            segs: VecDeque::new(),
            in_flight: BTreeMap::new(),
            lost: BTreeSet::new(),
            next_xmit: 0,
            highest_delivered_xmit: None,
            highest_sacked: None,
            rto_deadline: None,
            retransmissions: 0,
            timeouts: 0,
            total_segments,
            last_payload,
            cfg,
        }
    }

    pub fn config(&self) -> &TcpConfig {
        &self.cfg
    }

    pub fn total_segments(&self) -> Option<u32> {
        self.total_segments
    }

    /// Lowest unacknowledged segment.
    pub fn highest_acked(&self) -> u32 {
        self.snd_una
    }

    pub fn next_seq(&self) -> u32 {
        self.snd_nxt
    }

    /// Segments believed to be in the network.
    pub fn pipe(&self) -> usize {
        self.in_flight.len()
    }

    pub fn lost_pending(&self) -> usize {
        self.lost.len()
    }

    /// Number of multiplicative decreases taken so far (SACK recoveries).
    pub fn reductions(&self) -> u32 {
        self.reductions
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }

    pub fn in_recovery(&self) -> bool {
        self.state != CongestionState::Open
    }

    /// Everything sent and acknowledged (never true for bulk senders).
    pub fn is_complete(&self) -> bool {
        self.total_segments.is_some_and(|total| self.snd_una >= total)
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    /// Current retransmission timeout including backoff. As in Linux, the
    /// variance term never drops below `min_rto`, so the timeout stays at
    /// least `min_rto` above the smoothed RTT.
    pub fn rto(&self) -> Duration {
        let base = match self.srtt {
            None => self.cfg.initial_rto,
            Some(srtt) => (srtt + (self.rttvar * 4).max(self.cfg.min_rto)).min(self.cfg.max_rto),
        };
        let factor = 1u32.checked_shl(self.backoff).unwrap_or(u32::MAX);
        base.saturating_mul(factor).min(self.cfg.max_rto)
    }

    fn payload_of(&self, seq: u32) -> u32 {
        match self.total_segments {
            Some(total) if seq + 1 == total => self.last_payload,
            _ => self.cfg.mss,
        }
    }

    fn seg_mut(&mut self, seq: u32) -> &mut SegState {
        let idx = (seq - self.snd_una) as usize;
        &mut self.segs[idx]
    }

    /// Pulls the next segment the window allows, if any.
    pub fn poll_transmit(&mut self, now: SimTime) -> Option<Transmission> {
        if (self.in_flight.len() as f64) + 1.0 > self.cwnd.floor().max(1.0) {
            return None;
        }
        let xmit = self.next_xmit;
        let tx = if let Some(seq) = self.lost.pop_first() {
            let seg = self.seg_mut(seq);
            seg.xmit = xmit;
            seg.lost = false;
            self.retransmissions += 1;
            if seq == self.snd_una {
                self.rto_deadline = Some(now + self.rto());
            }
            Transmission {
                seq,
                xmit,
                payload: self.payload_of(seq),
                retransmit: true,
            }
        } else {
            if self.total_segments.is_some_and(|total| self.snd_nxt >= total) {
                return None;
            }
            let seq = self.snd_nxt;
            self.snd_nxt += 1;
            self.segs.push_back(SegState {
                xmit,
                sacked: false,
                lost: false,
            });
            Transmission {
                seq,
                xmit,
                payload: self.payload_of(seq),
                retransmit: false,
            }
        };
        self.next_xmit += 1;
        self.in_flight.insert(xmit, tx.seq);
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto());
        }
        Some(tx)
    }

    fn update_rtt(&mut self, sample: Duration) {
        self.min_rtt = Some(self.min_rtt.map_or(sample, |m| m.min(sample)));
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2;
            }
            Some(srtt) => {
                let err = if srtt > sample { srtt - sample } else { sample - srtt };
                self.rttvar = (self.rttvar * 3 + err) / 4;
                self.srtt = Some((srtt * 7 + sample) / 8);
            }
        }
    }

    /// Marks `seq` delivered; returns true if it was not already.
    fn mark_delivered(&mut self, seq: u32) -> bool {
        let seg = *self.seg_mut(seq);
        if seg.sacked {
            return false;
        }
        self.seg_mut(seq).sacked = true;
        if seg.lost {
            self.lost.remove(&seq);
        } else {
            self.in_flight.remove(&seg.xmit);
        }
        true
    }

    fn enter_recovery(&mut self, state: CongestionState) {
        self.reductions += u32::from(state == CongestionState::Recovery);
        self.state = state;
        self.recovery_point = self.snd_nxt;
        self.epoch_start = None;
        self.epoch = None;
    }

    pub fn on_ack(&mut self, ack: AckInfo, now: SimTime) {
        self.update_rtt(now.saturating_since(ack.echo_sent_at));
        self.highest_delivered_xmit = Some(
            self.highest_delivered_xmit
                .map_or(ack.echo_xmit, |h| h.max(ack.echo_xmit)),
        );

        let mut newly_delivered = 0u32;
        if ack.sacked >= self.snd_una && ack.sacked < self.snd_nxt {
            newly_delivered += u32::from(self.mark_delivered(ack.sacked));
            self.highest_sacked = Some(self.highest_sacked.map_or(ack.sacked, |h| h.max(ack.sacked)));
        }
        let advanced = ack.cum_ack > self.snd_una;
        while self.snd_una < ack.cum_ack.min(self.snd_nxt) {
            newly_delivered += u32::from(self.mark_delivered(self.snd_una));
            self.segs.pop_front();
            self.snd_una += 1;
        }

        // Transmission-order loss detection.
        let threshold = u64::from(self.cfg.dupack_threshold);
        let mut detected_loss = false;
        if let Some(highest) = self.highest_delivered_xmit {
            while let Some((&xmit, &seq)) = self.in_flight.first_key_value() {
                if xmit + threshold > highest {
                    break;
                }
                self.in_flight.remove(&xmit);
                self.seg_mut(seq).lost = true;
                self.lost.insert(seq);
                detected_loss = true;
            }
        }

        if self.state != CongestionState::Open && self.snd_una >= self.recovery_point {
            self.state = CongestionState::Open;
        }

        if detected_loss && self.state == CongestionState::Open {
            // One multiplicative decrease per loss episode.
            self.w_max = self.cwnd;
            self.cwnd = (self.cwnd * self.cfg.cubic_beta).max(2.0);
            self.ssthresh = self.cwnd;
            self.enter_recovery(CongestionState::Recovery);
        } else if self.state == CongestionState::Open && newly_delivered > 0 {
            self.grow(newly_delivered, now);
        }

        if advanced {
            self.backoff = 0;
            self.rto_deadline = if self.snd_una < self.snd_nxt {
                Some(now + self.rto())
            } else {
                None
            };
        }
    }

    fn grow(&mut self, acked: u32, now: SimTime) {
        let mut acked = f64::from(acked);
        if self.cwnd < self.ssthresh {
            let room = self.ssthresh - self.cwnd;
            let step = acked.min(room);
            self.cwnd += step;
            acked -= step;
            if acked <= 0.0 {
                return;
            }
        }
        let cfg = self.cfg;
        let epoch = match self.epoch {
            Some(e) => e,
            None => {
                let e = CubicEpoch::new(self.cwnd, self.w_max, &cfg);
                self.epoch = Some(e);
                self.epoch_start = Some(now);
                self.reno_estimate = self.cwnd;
                e
            }
        };
        let rtt = self.srtt.unwrap_or(Duration::from_millis(100)).as_secs_f64();
        let t = now.saturating_since(self.epoch_start.unwrap()).as_secs_f64();
        let cubic_target = epoch.window_at(t + rtt, &cfg);
        self.reno_estimate += cfg.reno_friendly_gain() * acked / self.cwnd;
        let target = cubic_target.max(self.reno_estimate).min(1.5 * self.cwnd);
        if target > self.cwnd {
            self.cwnd += ((target - self.cwnd) / self.cwnd * acked).min(target - self.cwnd);
        }
    }

    /// Retransmission timer expiry: collapse the window, treat everything
    /// outstanding as lost and back off the timer.
    pub fn on_rto(&mut self, now: SimTime) {
        self.timeouts += 1;
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.w_max = self.cwnd;
        self.cwnd = 1.0;
        while let Some((_, seq)) = self.in_flight.pop_first() {
            self.seg_mut(seq).lost = true;
            self.lost.insert(seq);
        }
        self.enter_recovery(CongestionState::Loss);
        self.backoff = (self.backoff + 1).min(16);
        self.rto_deadline = if self.snd_una < self.snd_nxt {
            Some(now + self.rto())
        } else {
            None
        };
    }
}

/// In-order reassembly state with exact knowledge of what has arrived.
#[derive(Debug, Clone, Default)]
pub struct TcpReceiver {
    rcv_nxt: u32,
    out_of_order: BTreeSet<u32>,
    total_segments: Option<u32>,
}

/// Result of one data arrival at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    /// First copy of this segment.
    pub new_data: bool,
    pub cum_ack: u32,
    /// The transfer just became complete.
    pub completed: bool,
}

impl TcpReceiver {
    pub fn new(total_segments: Option<u32>) -> Self {
        TcpReceiver {
            total_segments,
            ..Self::default()
        }
    }

    pub fn cum_ack(&self) -> u32 {
        self.rcv_nxt
    }

    pub fn is_complete(&self) -> bool {
        self.total_segments.is_some_and(|t| self.rcv_nxt >= t)
    }

    pub fn on_data(&mut self, seq: u32) -> Arrival {
        let was_complete = self.is_complete();
        let new_data = if seq < self.rcv_nxt {
            false
        } else if seq == self.rcv_nxt {
            self.rcv_nxt += 1;
            while self.out_of_order.remove(&self.rcv_nxt) {
                self.rcv_nxt += 1;
            }
            true
        } else {
            self.out_of_order.insert(seq)
        };
        Arrival {
            new_data,
            cum_ack: self.rcv_nxt,
            completed: !was_complete && self.is_complete(),
        }
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn window_floors_hold_under_random_loss(
            losses in proptest::collection::vec(any::<u8>(), 50..400),
            loss_rate in 0u8..128,
        ) {
            let mut s = TcpSender::new(TcpConfig::default(), Some(400 * 1460));
            let mut rx = TcpReceiver::new(Some(400));
            let mut now = SimTime::ZERO;
            let mut draws = losses.iter().cycle();
            for _ in 0..losses.len() {
                let sent: Vec<_> = std::iter::from_fn(|| s.poll_transmit(now)).collect();
                let sent_at = now;
                now += Duration::from_millis(50);
                for tx in sent {
                    if *draws.next().unwrap() < loss_rate {
                        continue;
                    }
                    let a = rx.on_data(tx.seq);
                    s.on_ack(
                        AckInfo { cum_ack: a.cum_ack, sacked: tx.seq, echo_xmit: tx.xmit, echo_sent_at: sent_at },
                        now,
                    );
                    prop_assert!(s.cwnd >= 1.0, "cwnd {}", s.cwnd);
                    prop_assert!(s.ssthresh >= 2.0, "ssthresh {}", s.ssthresh);
                }
                if let Some(deadline) = s.rto_deadline() {
                    if deadline <= now {
                        s.on_rto(now);
                        prop_assert!(s.cwnd >= 1.0);
                        prop_assert!(s.ssthresh >= 2.0);
                    }
                }
                if s.is_complete() {
                    break;
                }
                if s.pipe() == 0 && s.lost_pending() == 0 {
                    if let Some(deadline) = s.rto_deadline() {
                        now = now.max(deadline);
                    }
                }
            }
        }
    }
}
