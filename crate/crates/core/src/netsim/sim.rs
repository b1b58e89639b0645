use std::collections::BTreeSet;
use std::time::Duration;

use rand::distr::OpenClosed01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ScenarioConfig};
use super::link::{serialization_time, FifoLine, Link, LinkQueue};
use crate::aqm::{AqmQueue, QueueCounters};
use crate::engine::{Engine, Handler, SimSummary, SimTime};
use crate::metrics::{Collector, MetricSeries};
use crate::packet::{ClassKey, ConnId, FlowId, Packet, PacketKind, PathId, TrafficClass};
use crate::transport::{
    AckInfo, CbrSpec, DownloadRecord, ShortFlowSpec, TcpConfig, TcpReceiver, TcpSender,
};

type LinkId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    /// Packet reaches the input of its next hop, or its sink.
    Arrive(Packet),
    /// A managed link finished clocking out its current packet.
    TxDone(LinkId),
    ControllerTick,
    CbrSend(FlowId),
    DownloadRequest(FlowId),
    /// Connection setup for the pending download is done.
    DownloadStart(FlowId),
    BulkStart(FlowId),
    Rto(ConnId, u64),
}

#[derive(Debug, Clone)]
enum App {
    Cbr { next_seq: u64 },
    ShortFile { pending: Option<(u32, SimTime)> },
    Bulk,
}

#[derive(Debug, Clone)]
struct Flow {
    class: ClassKey,
    base_rtt: Duration,
    app: App,
    fwd: PathId,
    rev: PathId,
}

#[derive(Debug)]
struct Conn {
    flow: FlowId,
    sender: TcpSender,
    receiver: TcpReceiver,
    rto_generation: u64,
    rto_armed: Option<SimTime>,
}

/// Packet accounting of one link's queue at the end of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueReport {
    pub link: String,
    #[serde(flatten)]
    pub counters: QueueCounters,
}

/// Totals over every TCP connection of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpTotals {
    pub connections: u64,
    pub retransmissions: u64,
    pub timeouts: u64,
    /// Multiplicative decreases from SACK-detected loss.
    pub reductions: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: MetricSeries,
    pub events: SimSummary,
    pub tcp: TcpTotals,
    /// Bottleneck queue first, then the reverse bottleneck, then access links.
    pub queues: Vec<QueueReport>,
}

impl RunResult {
    pub fn bottleneck(&self) -> &QueueReport {
        &self.queues[0]
    }
}

struct World {
    rng: ChaCha8Rng,
    links: Vec<Link>,
    paths: Vec<Vec<LinkId>>,
    flows: Vec<Flow>,
    conns: Vec<Option<Conn>>,
    tcp: TcpConfig,
    cbr: CbrSpec,
    short: ShortFlowSpec,
    collector: Collector,
    tcp_totals: TcpTotals,
    next_packet_id: u64,
    controller_interval: Option<Duration>,
}

const BOTTLENECK: LinkId = 0;
const REVERSE_BOTTLENECK: LinkId = 1;

fn rtt_ms(rtt: Duration) -> u32 {
    u32::try_from((rtt.as_nanos() + 500_000) / 1_000_000).expect("RTT fits u32 ms")
}

/// A wired scenario ready to run.
pub struct Simulation {
    engine: Engine<Event>,
    world: World,
    end: SimTime,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let queue = AqmQueue::new(cfg.aqm_config(), cfg.queue_capacity(), cfg.bottleneck_rate_bps);
        let controller_interval = queue.update_interval();
        let mut links = vec![
            Link {
                name: "bottleneck".into(),
                rate_bps: cfg.bottleneck_rate_bps,
                owd: cfg.bottleneck_owd,
                queue: LinkQueue::Managed {
                    queue,
                    in_service: None,
                },
            },
            // ACKs return over an unmanaged FIFO at access speed.
            Link {
                name: "bottleneck_reverse".into(),
                rate_bps: cfg.access_rate_bps,
                owd: cfg.bottleneck_owd,
                queue: LinkQueue::Fifo(FifoLine::default()),
            },
        ];
        let mut add_link = |name: String, owd: Duration| {
            links.push(Link {
                name,
                rate_bps: cfg.access_rate_bps,
                owd,
                queue: LinkQueue::Fifo(FifoLine::default()),
            });
            links.len() - 1
        };

        let mut flows = Vec::new();
        let mut paths = Vec::new();
        for group in cfg.groups() {
            let (n_cbr, n_sf, n_ftp) = cfg.counts(group);
            let populations = [
                (TrafficClass::Cbr, n_cbr),
                (TrafficClass::ShortFile, n_sf),
                (TrafficClass::Bulk, n_ftp),
            ];
            let class_rtt = rtt_ms(cfg.base_rtt(group));
            for (class, n) in populations {
                for _ in 0..n {
                    let id = flows.len();
                    let snd_owd = cfg.sender_access_owd(group);
                    let snd_up = add_link(format!("flow{id}_sender_up"), snd_owd);
                    let rcv_down = add_link(format!("flow{id}_receiver_down"), cfg.access_owd);
                    let rcv_up = add_link(format!("flow{id}_receiver_up"), cfg.access_owd);
                    let snd_down = add_link(format!("flow{id}_sender_down"), snd_owd);
                    paths.push(vec![snd_up, BOTTLENECK, rcv_down]);
                    paths.push(vec![rcv_up, REVERSE_BOTTLENECK, snd_down]);
                    let app = match class {
                        TrafficClass::Cbr => App::Cbr { next_seq: 0 },
                        TrafficClass::ShortFile => App::ShortFile { pending: None },
                        TrafficClass::Bulk => App::Bulk,
                    };
                    flows.push(Flow {
                        class: ClassKey {
                            class,
                            rtt_ms: class_rtt,
                        },
                        base_rtt: cfg.base_rtt(group),
                        app,
                        fwd: (paths.len() - 2) as PathId,
                        rev: (paths.len() - 1) as PathId,
                    });
                }
            }
        }

        let classes: BTreeSet<ClassKey> = flows.iter().map(|f| f.class).collect();
        let mut engine = Engine::new();
        let jitter_ns = crate::engine::duration_nanos(cfg.start_jitter);
        for (id, flow) in flows.iter().enumerate() {
            let start = SimTime::from_nanos(rng.random_range(0..=jitter_ns));
            let id = id as FlowId;
            let event = match flow.app {
                App::Cbr { .. } => Event::CbrSend(id),
                App::ShortFile { .. } => Event::DownloadRequest(id),
                App::Bulk => Event::BulkStart(id),
            };
            engine.schedule(start, event).expect("start times are non-negative");
        }
        if let Some(interval) = controller_interval {
            engine.schedule_in(interval, Event::ControllerTick);
        }

        let world = World {
            rng,
            links,
            paths,
            flows,
            conns: Vec::new(),
            tcp: cfg.tcp_config(),
            cbr: cfg.cbr_spec(),
            short: cfg.short_flow_spec(),
            collector: Collector::new(cfg.duration, classes),
            tcp_totals: TcpTotals::default(),
            next_packet_id: 0,
            controller_interval,
        };
        Ok(Simulation {
            engine,
            world,
            end: SimTime::ZERO + cfg.duration,
        })
    }

    pub fn run(mut self) -> RunResult {
        let events = self.engine.run_until(self.end, &mut self.world);
        self.world.finish(self.end, events)
    }
}

/// Builds and runs one scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, ConfigError> {
    Ok(Simulation::new(cfg)?.run())
}

impl Handler<Event> for World {
    fn handle(&mut self, engine: &mut Engine<Event>, event: Event) {
        match event {
            Event::Arrive(pkt) => self.arrive(engine, pkt),
            Event::TxDone(link) => self.tx_done(engine, link),
            Event::ControllerTick => {
                if let LinkQueue::Managed { queue, .. } = &mut self.links[BOTTLENECK].queue {
                    queue.on_update_tick();
                }
                let interval = self.controller_interval.expect("ticks only with a controller");
                engine.schedule_in(interval, Event::ControllerTick);
            }
            Event::CbrSend(flow) => self.cbr_send(engine, flow),
            Event::DownloadRequest(flow) => self.download_request(engine, flow),
            Event::DownloadStart(flow) => {
                let App::ShortFile { pending: Some((size, _)) } = self.flows[flow as usize].app else {
                    unreachable!("download start without a pending request");
                };
                self.open_conn(engine, flow, Some(u64::from(size)));
            }
            Event::BulkStart(flow) => {
                self.open_conn(engine, flow, None);
            }
            Event::Rto(conn, generation) => self.rto_fired(engine, conn, generation),
        }
    }
}

impl World {
    fn new_packet(&mut self, flow: FlowId, size: u32, kind: PacketKind, path: PathId, now: SimTime) -> Packet {
        let mut pkt = Packet::new(self.next_packet_id, flow, size, kind, now);
        self.next_packet_id += 1;
        pkt.path = path;
        pkt
    }

    fn arrive(&mut self, engine: &mut Engine<Event>, mut pkt: Packet) {
        let now = engine.now();
        let path = &self.paths[pkt.path as usize];
        let Some(&link_id) = path.get(usize::from(pkt.hop)) else {
            self.deliver(engine, pkt);
            return;
        };
        pkt.hop += 1;
        let link = &mut self.links[link_id];
        match &mut link.queue {
            LinkQueue::Fifo(line) => {
                let done = line.admit(now, pkt.size, link.rate_bps);
                engine
                    .schedule(done + link.owd, Event::Arrive(pkt))
                    .expect("deliveries lie in the future");
            }
            LinkQueue::Managed { queue, in_service } => {
                let u = if queue.uses_random_draws() {
                    self.rng.sample(OpenClosed01)
                } else {
                    1.0
                };
                match queue.enqueue(pkt, now, u) {
                    Err(record) => self.collector.record_drop(record),
                    Ok(()) => {
                        if in_service.is_none() {
                            self.start_service(engine, link_id);
                        }
                    }
                }
            }
        }
    }

    fn start_service(&mut self, engine: &mut Engine<Event>, link_id: LinkId) {
        let now = engine.now();
        let link = &mut self.links[link_id];
        let LinkQueue::Managed { queue, in_service } = &mut link.queue else {
            unreachable!("only managed links are serviced explicitly");
        };
        let mut head_drops = Vec::new();
        let next = queue.dequeue(now, &mut head_drops);
        for record in head_drops {
            self.collector.record_drop(record);
        }
        if let Some(pkt) = next {
            let done = now + serialization_time(pkt.size, link.rate_bps);
            let class = self.flows[pkt.flow as usize].class;
            self.collector.record_qdelay(now, now - pkt.enqueue_ts, class);
            self.collector.record_busy(now, done);
            *in_service = Some(pkt);
            engine
                .schedule(done, Event::TxDone(link_id))
                .expect("serialization ends in the future");
        }
    }

    fn tx_done(&mut self, engine: &mut Engine<Event>, link_id: LinkId) {
        let link = &mut self.links[link_id];
        let LinkQueue::Managed { in_service, .. } = &mut link.queue else {
            unreachable!("only managed links report completions");
        };
        let pkt = in_service.take().expect("a packet was in service");
        engine.schedule_in(link.owd, Event::Arrive(pkt));
        self.start_service(engine, link_id);
    }

    fn deliver(&mut self, engine: &mut Engine<Event>, pkt: Packet) {
        let now = engine.now();
        let class = self.flows[pkt.flow as usize].class;
        match pkt.kind {
            PacketKind::Datagram { .. } => {
                self.collector.record_owd(now, now - pkt.sent_at, class);
                self.collector.record_delivery(now, class, pkt.payload());
            }
            PacketKind::Data {
                conn: conn_id,
                seq,
                xmit,
                payload,
            } => {
                let Some(conn) = self.conns[conn_id as usize].as_mut() else {
                    return;
                };
                self.collector.record_owd(now, now - pkt.sent_at, class);
                let arrival = conn.receiver.on_data(seq);
                if arrival.new_data {
                    self.collector.record_delivery(now, class, payload);
                }
                let ack = PacketKind::Ack {
                    conn: conn_id,
                    cum_ack: arrival.cum_ack,
                    sacked: seq,
                    echo_xmit: xmit,
                    echo_sent_at: pkt.sent_at,
                };
                let rev = self.flows[pkt.flow as usize].rev;
                let ack = self.new_packet(pkt.flow, self.tcp.wire_size(0), ack, rev, now);
                self.arrive(engine, ack);
                if arrival.completed {
                    self.download_finished(engine, conn_id);
                }
            }
            PacketKind::Ack {
                conn: conn_id,
                cum_ack,
                sacked,
                echo_xmit,
                echo_sent_at,
            } => {
                let Some(conn) = self.conns[conn_id as usize].as_mut() else {
                    return;
                };
                let info = AckInfo {
                    cum_ack,
                    sacked,
                    echo_xmit,
                    echo_sent_at,
                };
                conn.sender.on_ack(info, now);
                self.pump(engine, conn_id);
            }
        }
    }

    fn open_conn(&mut self, engine: &mut Engine<Event>, flow: FlowId, bytes: Option<u64>) {
        let sender = TcpSender::new(self.tcp, bytes);
        let receiver = TcpReceiver::new(sender.total_segments());
        let id = self.conns.len() as ConnId;
        self.conns.push(Some(Conn {
            flow,
            sender,
            receiver,
            rto_generation: 0,
            rto_armed: None,
        }));
        self.pump(engine, id);
    }

    /// Sends whatever the window allows and keeps the retransmission timer
    /// in step with the sender.
    fn pump(&mut self, engine: &mut Engine<Event>, conn_id: ConnId) {
        let now = engine.now();
        let conn = self.conns[conn_id as usize].as_mut().expect("open connection");
        let flow = conn.flow;
        let mut outgoing = Vec::new();
        while let Some(tx) = conn.sender.poll_transmit(now) {
            outgoing.push(tx);
        }
        if let Some(deadline) = conn.sender.rto_deadline() {
            if conn.rto_armed.is_none_or(|armed| armed > deadline) {
                conn.rto_generation += 1;
                conn.rto_armed = Some(deadline);
                engine
                    .schedule(deadline, Event::Rto(conn_id, conn.rto_generation))
                    .expect("RTO deadlines lie in the future");
            }
        }
        let fwd = self.flows[flow as usize].fwd;
        for tx in outgoing {
            let kind = PacketKind::Data {
                conn: conn_id,
                seq: tx.seq,
                xmit: tx.xmit,
                payload: tx.payload,
            };
            let pkt = self.new_packet(flow, self.tcp.wire_size(tx.payload), kind, fwd, now);
            self.arrive(engine, pkt);
        }
    }

    fn rto_fired(&mut self, engine: &mut Engine<Event>, conn_id: ConnId, generation: u64) {
        let now = engine.now();
        let Some(conn) = self.conns[conn_id as usize].as_mut() else {
            return;
        };
        if conn.rto_generation != generation {
            return;
        }
        conn.rto_armed = None;
        match conn.sender.rto_deadline() {
            None => {}
            Some(deadline) => {
                if deadline <= now {
                    conn.sender.on_rto(now);
                }
                self.pump(engine, conn_id);
            }
        }
    }

    fn cbr_send(&mut self, engine: &mut Engine<Event>, flow: FlowId) {
        let now = engine.now();
        let f = &mut self.flows[flow as usize];
        let App::Cbr { next_seq } = &mut f.app else {
            unreachable!("CBR event for a non-CBR flow");
        };
        let seq = *next_seq;
        *next_seq += 1;
        let fwd = f.fwd;
        let pkt = self.new_packet(flow, self.cbr.packet_size, PacketKind::Datagram { seq }, fwd, now);
        self.arrive(engine, pkt);
        engine.schedule_in(self.cbr.gap(), Event::CbrSend(flow));
    }

    fn download_request(&mut self, engine: &mut Engine<Event>, flow: FlowId) {
        let now = engine.now();
        let size = self.short.draw_size(&mut self.rng);
        let f = &mut self.flows[flow as usize];
        let App::ShortFile { pending } = &mut f.app else {
            unreachable!("download request for a non-short-file flow");
        };
        *pending = Some((size, now));
        // Handshake packets are not simulated; setup costs one base RTT.
        engine.schedule_in(f.base_rtt, Event::DownloadStart(flow));
    }

    fn download_finished(&mut self, engine: &mut Engine<Event>, conn_id: ConnId) {
        let now = engine.now();
        let conn = self.conns[conn_id as usize].take().expect("open connection");
        self.retire(&conn.sender);
        let flow = conn.flow;
        let App::ShortFile { pending } = &mut self.flows[flow as usize].app else {
            unreachable!("only short-file transfers complete");
        };
        let (size, requested_at) = pending.take().expect("a download was pending");
        self.collector.record_download(DownloadRecord {
            flow,
            size_bytes: size,
            requested_at,
            duration: Some(now - requested_at),
        });
        let think = self.short.draw_think_time(&mut self.rng);
        engine.schedule_in(think, Event::DownloadRequest(flow));
    }

    fn retire(&mut self, sender: &TcpSender) {
        let t = &mut self.tcp_totals;
        t.connections += 1;
        t.retransmissions += sender.retransmissions();
        t.timeouts += sender.timeouts();
        t.reductions += u64::from(sender.reductions());
    }

    fn finish(mut self, end: SimTime, events: SimSummary) -> RunResult {
        let open: Vec<Conn> = self.conns.iter_mut().filter_map(Option::take).collect();
        for conn in &open {
            self.retire(&conn.sender);
        }
        for (id, flow) in self.flows.iter_mut().enumerate() {
            if let App::ShortFile {
                pending: Some((size, requested_at)),
            } = flow.app
            {
                self.collector.record_download(DownloadRecord {
                    flow: id as FlowId,
                    size_bytes: size,
                    requested_at,
                    duration: None,
                });
            }
        }
        let queues = self
            .links
            .iter_mut()
            .map(|link| QueueReport {
                link: link.name.clone(),
                counters: match &mut link.queue {
                    LinkQueue::Fifo(line) => line.counters(end),
                    // A packet being clocked out has already left the queue.
                    LinkQueue::Managed { queue, .. } => queue.counters(),
                },
            })
            .collect();
        RunResult {
            metrics: self.collector.finish(),
            events,
            tcp: self.tcp_totals,
            queues,
        }
    }
}
