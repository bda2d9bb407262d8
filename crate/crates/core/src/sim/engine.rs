use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use super::cc::{CcEvent, CcMode, CcState};
use super::gbn::{gbn_on_receive, GbnReceive, GbnSender, NackOutcome};
use super::packet::{FlowId, Packet, PacketKind};
use super::pfc::{PfcAction, PortState, CLASSES};
use super::routing::RouteSelector;
use super::scenario::{FaultKind, Resolved, Scenario, TransportMode};
use super::selective::{AckRecord, SackReceiver, SelectiveSender};
use super::topology::{NodeId, Topology, TopologyError};
use super::{mix_all, unit_interval, SimError};
use crate::metrics::{fmt_ns, FlowRecord, GlobalCounters, PortSample, RewindRecord, RunMetrics};
use crate::traffic::{build_schedule, FlowSpec, Release, Schedule};
use crate::units::{Bandwidth, SimTime};

/// Written when the watchdog aborts a run.
#[derive(Debug, Clone)]
pub struct DeadlockReport {
    pub time: SimTime,
    pub last_progress: SimTime,
    pub incomplete_flows: Vec<FlowId>,
    /// `node:port:class` for every egress paused at abort time.
    pub paused_ports: Vec<String>,
    pub metrics: RunMetrics,
}

impl DeadlockReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "deadlock watchdog fired");
        let _ = writeln!(s, "time_ns: {}", fmt_ns(self.time));
        let _ = writeln!(s, "last_progress_ns: {}", fmt_ns(self.last_progress));
        let _ = writeln!(s, "incomplete_flows: {}", join(&self.incomplete_flows));
        let _ = writeln!(s, "paused_egress: {}", self.paused_ports.join(" "));
        s
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl Scenario {
    pub fn build_topology(&self) -> Result<Topology, SimError> {
        Ok(Topology::build_fat_tree(
            self.topology.tiers,
            self.topology.radix,
            self.geometry()?,
        )?)
    }

    pub fn schedule(&self, hosts: usize) -> Result<Schedule, SimError> {
        Ok(build_schedule(&self.traffic, hosts, self.seed)?)
    }
}

enum Event {
    Pfc { class: u8, pause: bool },
    TxDone,
    Arrive(Packet),
    Release(usize),
    HostWake,
    Rto(usize),
    CcTick(usize),
    Fault(usize),
    Sample,
}

impl Event {
    fn rank(&self) -> u8 {
        match self {
            Event::Pfc { .. } => 0,
            Event::TxDone => 1,
            Event::Arrive(_) => 2,
            Event::Release(_) => 3,
            Event::HostWake => 4,
            Event::Rto(_) => 5,
            Event::CcTick(_) => 6,
            Event::Fault(_) => 7,
            Event::Sample => 8,
        }
    }
}

struct Scheduled {
    key: (SimTime, usize, usize, u8, u64),
    ev: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

struct Queued {
    pkt: Packet,
    ingress: usize,
}

#[derive(Clone, Copy, Default, PartialEq, Eq)]
struct SampleState {
    occupancy: u64,
    paused: bool,
    marks: u64,
    drops: u64,
}

struct PortRt {
    ingress: PortState,
    ingress_drops: [u64; CLASSES],
    queues: [VecDeque<Queued>; CLASSES],
    queued_bytes: [u64; CLASSES],
    control: VecDeque<Packet>,
    busy: bool,
    in_tx: Option<(usize, u8, u64)>,
    paused: [bool; CLASSES],
    stuck: [bool; CLASSES],
    rr: usize,
    ecn_marks: [u64; CLASSES],
    loss_p: f64,
    last_sample: [SampleState; CLASSES],
}

enum SenderTx {
    Gbn(GbnSender),
    Sel(SelectiveSender),
}

impl SenderTx {
    fn next_to_send(&mut self) -> Option<u64> {
        match self {
            SenderTx::Gbn(s) => s.next_to_send(),
            SenderTx::Sel(s) => s.next_to_send(),
        }
    }
    fn mark_sent(&mut self, seq: u64) -> bool {
        match self {
            SenderTx::Gbn(s) => s.mark_sent(seq),
            SenderTx::Sel(s) => s.mark_sent(seq),
        }
    }
    fn outstanding(&self) -> u64 {
        match self {
            SenderTx::Gbn(s) => s.outstanding(),
            SenderTx::Sel(s) => s.outstanding(),
        }
    }
    fn done(&self) -> bool {
        match self {
            SenderTx::Gbn(s) => s.done(),
            SenderTx::Sel(s) => s.done(),
        }
    }
    fn epoch(&self) -> u32 {
        match self {
            SenderTx::Gbn(s) => s.epoch(),
            SenderTx::Sel(_) => 0,
        }
    }
}

enum ReceiverRx {
    Gbn {
        expected: u64,
        last_nack: Option<(u64, u32)>,
    },
    Sel(SackReceiver),
}

struct FlowRt {
    spec: FlowSpec,
    src_node: NodeId,
    packets: u64,
    base_rtt: SimTime,
    tx: SenderTx,
    rx: ReceiverRx,
    cc: Option<CcState>,
    fixed_window: Option<u64>,
    next_allowed: SimTime,
    attempts: Vec<u32>,
    sent_at: Vec<SimTime>,
    rto_deadline: Option<SimTime>,
    rto_pending: bool,
    backoff: u32,
    cc_tick_pending: bool,
    last_cnp: Option<SimTime>,
    released: bool,
    finished: bool,
    sender_done: bool,
    deps_remaining: usize,
    dependents: Vec<usize>,
    ready_at: SimTime,
    record: FlowRecord,
}

struct HostRt {
    classes: [Vec<usize>; CLASSES],
    flow_rr: [usize; CLASSES],
    wake_at: Option<SimTime>,
}

const MAX_BACKOFF: u32 = 6;
const MAX_SACK_RANGES: usize = 64;

struct Sim<'a> {
    topo: Topology,
    cfg: Resolved,
    scenario: &'a Scenario,
    bandwidth: Bandwidth,
    latency: SimTime,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: SimTime,
    ports: Vec<Vec<PortRt>>,
    hosts: Vec<Option<HostRt>>,
    flows: Vec<FlowRt>,
    router: RouteSelector,
    counters: GlobalCounters,
    paused_by_tier: [u64; 4],
    samples: Vec<PortSample>,
    rewinds: Vec<RewindRecord>,
    active: usize,
    last_progress: SimTime,
    classes: usize,
}

pub fn run(scenario: &Scenario) -> Result<RunMetrics, SimError> {
    let started = Instant::now();
    let cfg = scenario.resolve()?;
    let topo = scenario.build_topology()?;
    let schedule = scenario.schedule(topo.host_count())?;
    for f in &schedule.flows {
        if f.class as u32 >= scenario.pfc.classes {
            return Err(SimError::Config(format!(
                "flow {} uses class {} but pfc.classes = {}",
                f.id, f.class, scenario.pfc.classes
            )));
        }
    }
    let mut sim = Sim::new(scenario, cfg, topo, schedule)?;
    let outcome = sim.run_loop();
    let mut metrics = sim.finish();
    metrics.wall_clock = started.elapsed();
    match outcome {
        Ok(()) => Ok(metrics),
        Err((time, last_progress, paused_ports)) => {
            let incomplete_flows = metrics
                .flows
                .iter()
                .filter(|f| f.start.is_some() && f.finish.is_none())
                .map(|f| f.flow_id)
                .collect();
            Err(SimError::Deadlock(Box::new(DeadlockReport {
                time,
                last_progress,
                incomplete_flows,
                paused_ports,
                metrics,
            })))
        }
    }
}

type Deadlock = (SimTime, SimTime, Vec<String>);

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario, cfg: Resolved, topo: Topology, schedule: Schedule) -> Result<Self, SimError> {
        let g = cfg.geometry;
        let xoff = scenario.pfc.xoff_bytes;
        let mut ports: Vec<Vec<PortRt>> = topo
            .nodes
            .iter()
            .map(|n| {
                (0..n.ports.len())
                    .map(|_| PortRt {
                        ingress: PortState::new(xoff, cfg.headroom_bytes, scenario.pfc.enabled),
                        ingress_drops: [0; CLASSES],
                        queues: Default::default(),
                        queued_bytes: [0; CLASSES],
                        control: VecDeque::new(),
                        busy: false,
                        in_tx: None,
                        paused: [false; CLASSES],
                        stuck: [false; CLASSES],
                        rr: 0,
                        ecn_marks: [0; CLASSES],
                        loss_p: 0.0,
                        last_sample: [SampleState::default(); CLASSES],
                    })
                    .collect()
            })
            .collect();
        for (l, &p) in scenario.loss.iter().zip(&cfg.loss_probabilities) {
            let (node, port) = link(&topo, &l.from, &l.to)?;
            ports[node][port].loss_p = p;
        }
        let hosts = topo
            .nodes
            .iter()
            .map(|n| {
                topo.is_host(n.id).then(|| HostRt {
                    classes: Default::default(),
                    flow_rr: [0; CLASSES],
                    wake_at: None,
                })
            })
            .collect();

        let one_way = g.one_way_latency();
        let wire_max = scenario.topology.mtu_bytes;
        let mut flows: Vec<FlowRt> = schedule
            .flows
            .into_iter()
            .map(|spec| {
                let packets = spec.bytes.div_ceil(cfg.max_payload);
                let base_rtt = one_way * (2 * topo.path_links(spec.src, spec.dst) as u64);
                let tx = match scenario.transport.mode {
                    TransportMode::GoBackN => SenderTx::Gbn(GbnSender::new(packets, base_rtt)),
                    TransportMode::Selective => {
                        SenderTx::Sel(SelectiveSender::new(packets, scenario.transport.dupthresh))
                    }
                };
                let rx = match scenario.transport.mode {
                    TransportMode::GoBackN => ReceiverRx::Gbn {
                        expected: 0,
                        last_nack: None,
                    },
                    TransportMode::Selective => {
                        ReceiverRx::Sel(SackReceiver::new(scenario.transport.reorder_buffer_packets))
                    }
                };
                let start_window = scenario
                    .transport
                    .window_bytes
                    .unwrap_or_else(|| g.bandwidth.bytes_in(base_rtt) + wire_max);
                let cc = cfg
                    .cc
                    .map(|p| CcState::new(p, g.bandwidth, base_rtt, start_window, wire_max));
                let fixed_window = match cfg.cc {
                    Some(p) if p.mode == CcMode::Window => None,
                    _ => scenario.transport.window_bytes,
                };
                let deps_remaining = match &spec.release {
                    Release::At(_) => 0,
                    Release::After { deps, .. } => deps.len(),
                };
                let record = FlowRecord {
                    flow_id: spec.id,
                    src: spec.src,
                    dst: spec.dst,
                    bytes: spec.bytes,
                    class: spec.class,
                    start: None,
                    finish: None,
                    retx_bytes: 0,
                    drops: 0,
                    dropped_bytes: 0,
                    injection_done: None,
                    first_feedback: None,
                    rewinds: 0,
                    timeouts: 0,
                    timeout_requeued_bytes: 0,
                    delivered_bytes: 0,
                };
                FlowRt {
                    src_node: topo.hosts[spec.src],
                    packets,
                    base_rtt,
                    tx,
                    rx,
                    cc,
                    fixed_window,
                    next_allowed: SimTime::ZERO,
                    attempts: vec![0; packets as usize],
                    sent_at: vec![SimTime::ZERO; packets as usize],
                    rto_deadline: None,
                    rto_pending: false,
                    backoff: 0,
                    cc_tick_pending: false,
                    last_cnp: None,
                    released: false,
                    finished: false,
                    sender_done: false,
                    deps_remaining,
                    dependents: Vec::new(),
                    ready_at: SimTime::ZERO,
                    record,
                    spec,
                }
            })
            .collect();
        for i in 0..flows.len() {
            if let Release::After { deps, .. } = &flows[i].spec.release {
                for &d in deps.clone().iter() {
                    flows[d as usize].dependents.push(i);
                }
            }
        }

        let mut sim = Sim {
            bandwidth: g.bandwidth,
            latency: one_way,
            router: RouteSelector::new(cfg.route_policy, scenario.seed),
            classes: scenario.pfc.classes as usize,
            topo,
            cfg,
            scenario,
            heap: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            ports,
            hosts,
            flows,
            counters: GlobalCounters::default(),
            paused_by_tier: [0; 4],
            samples: Vec::new(),
            rewinds: Vec::new(),
            active: 0,
            last_progress: SimTime::ZERO,
        };
        for i in 0..sim.flows.len() {
            if let Release::At(t) = sim.flows[i].spec.release {
                sim.push(t, sim.flows[i].src_node, 0, Event::Release(i));
            }
        }
        for (i, f) in scenario.faults.iter().enumerate() {
            let (node, port) = link(&sim.topo, &f.from, &f.to)?;
            sim.push(SimTime::from_us_f64(f.at_us), node, port, Event::Fault(i));
        }
        if !sim.heap.is_empty() && sim.cfg.sample_interval > SimTime::ZERO {
            sim.push(SimTime::ZERO, usize::MAX, usize::MAX, Event::Sample);
        }
        Ok(sim)
    }

    fn push(&mut self, time: SimTime, node: usize, port: usize, ev: Event) {
        self.seq += 1;
        let key = (time, node, port, ev.rank(), self.seq);
        self.heap.push(Scheduled { key, ev });
    }

    fn run_loop(&mut self) -> Result<(), Deadlock> {
        while let Some(Scheduled { key, ev }) = self.heap.pop() {
            let (time, node, port, _, _) = key;
            if self.is_stale(&ev) {
                continue;
            }
            if time > self.cfg.horizon {
                // put it back so in-flight accounting sees it
                self.heap.push(Scheduled { key, ev });
                self.now = self.cfg.horizon;
                return Ok(());
            }
            if self.active > 0 && time > self.last_progress + self.cfg.watchdog {
                self.now = self.last_progress + self.cfg.watchdog;
                return Err((self.now, self.last_progress, self.paused_list()));
            }
            debug_assert!(time >= self.now, "time went backwards");
            self.now = time;
            self.counters.events += 1;
            match ev {
                Event::Pfc { class, pause } => self.on_pfc(node, port, class, pause),
                Event::TxDone => self.on_tx_done(node, port),
                Event::Arrive(pkt) => self.on_arrive(node, port, pkt),
                Event::Release(f) => self.on_release(f),
                Event::HostWake => {
                    if let Some(h) = self.hosts[node].as_mut() {
                        h.wake_at = None;
                    }
                    self.try_start(node, 0);
                }
                Event::Rto(f) => self.on_rto(f),
                Event::CcTick(f) => self.on_cc_tick(f),
                Event::Fault(i) => self.on_fault(node, port, i),
                Event::Sample => {
                    self.take_samples();
                    if self.heap.iter().any(|s| !self.is_stale(&s.ev)) {
                        let next = self.now + self.cfg.sample_interval;
                        self.push(next, usize::MAX, usize::MAX, Event::Sample);
                    }
                }
            }
        }
        if self.active > 0 {
            // nothing left to happen: the watchdog would fire at its deadline
            self.now = self.now.max(self.last_progress + self.cfg.watchdog);
            return Err((self.now, self.last_progress, self.paused_list()));
        }
        Ok(())
    }

    /// Timers of flows whose sender already finished; they neither act nor advance the clock.
    fn is_stale(&self, ev: &Event) -> bool {
        match ev {
            Event::Rto(f) | Event::CcTick(f) => self.flows[*f].sender_done,
            _ => false,
        }
    }

    fn paused_list(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (n, ports) in self.ports.iter().enumerate() {
            for (p, rt) in ports.iter().enumerate() {
                for c in 0..CLASSES {
                    if rt.paused[c] {
                        out.push(format!("{}:{}:{}", self.topo.nodes[n].name, p, c));
                    }
                }
            }
        }
        out
    }

    fn progress(&mut self) {
        self.last_progress = self.now;
    }

    // ---- pause bookkeeping ----

    fn set_paused(&mut self, node: NodeId, port: usize, class: u8, pause: bool) {
        let rt = &mut self.ports[node][port];
        let c = class as usize;
        if rt.paused[c] == pause || (!pause && rt.stuck[c]) {
            return;
        }
        rt.paused[c] = pause;
        let tier = self.topo.nodes[node].tier as usize;
        if pause {
            self.paused_by_tier[tier] += 1;
            if self.counters.first_pause_by_tier[tier].is_none() {
                self.counters.first_pause_by_tier[tier] = Some(self.now);
            }
            let tiers = self.paused_by_tier.iter().filter(|&&n| n > 0).count() as u32;
            let ports: u64 = self.paused_by_tier.iter().sum();
            self.counters.max_paused_tiers = self.counters.max_paused_tiers.max(tiers);
            self.counters.max_paused_ports = self.counters.max_paused_ports.max(ports);
        } else {
            self.paused_by_tier[tier] -= 1;
        }
    }

    fn on_pfc(&mut self, node: NodeId, port: usize, class: u8, pause: bool) {
        self.set_paused(node, port, class, pause);
        if !pause {
            self.try_start(node, port);
        }
    }

    fn send_pfc(&mut self, node: NodeId, ingress: usize, action: PfcAction) {
        let peer = self.topo.nodes[node].ports[ingress];
        let (class, pause) = match action {
            PfcAction::Pause(c) => (c, true),
            PfcAction::Resume(c) => (c, false),
        };
        if pause {
            self.counters.pause_frames += 1;
            self.counters.pause_frames_by_tier[self.topo.nodes[peer.peer].tier as usize] += 1;
        } else {
            self.counters.resume_frames += 1;
        }
        let at = self.now + self.latency;
        self.push(at, peer.peer, peer.peer_port, Event::Pfc { class, pause });
    }

    fn on_fault(&mut self, node: NodeId, port: usize, i: usize) {
        let f = &self.scenario.faults[i];
        match f.kind {
            FaultKind::StuckPause => {
                self.set_paused(node, port, f.class, true);
                self.ports[node][port].stuck[f.class as usize] = true;
            }
        }
    }

    // ---- transmission ----

    fn try_start(&mut self, node: NodeId, port: usize) {
        if self.ports[node][port].busy {
            return;
        }
        if let Some(pkt) = self.ports[node][port].control.pop_front() {
            self.transmit(node, port, pkt);
            return;
        }
        if self.hosts[node].is_some() {
            self.host_pull(node);
            return;
        }
        let rt = &mut self.ports[node][port];
        for i in 0..CLASSES {
            let c = (rt.rr + i) % CLASSES;
            if rt.paused[c] || rt.queues[c].is_empty() {
                continue;
            }
            let q = rt.queues[c].pop_front().unwrap();
            let wire = q.pkt.wire_bytes();
            rt.queued_bytes[c] -= wire;
            rt.in_tx = Some((q.ingress, c as u8, wire));
            rt.rr = (c + 1) % CLASSES;
            self.transmit(node, port, q.pkt);
            return;
        }
    }

    fn flow_window(&self, f: &FlowRt) -> Option<u64> {
        match &f.cc {
            Some(cc) if cc.mode() == CcMode::Window => Some(cc.window_bytes()),
            _ => f.fixed_window,
        }
    }

    /// Host NIC: round-robin over unpaused classes, then over that class's flows.
    fn host_pull(&mut self, node: NodeId) {
        let wire_max = self.scenario.topology.mtu_bytes;
        let mut earliest: Option<SimTime> = None;
        let start_class = self.ports[node][0].rr;
        for i in 0..CLASSES {
            let c = (start_class + i) % CLASSES;
            if self.ports[node][0].paused[c] {
                continue;
            }
            let host = self.hosts[node].as_ref().unwrap();
            let n = host.classes[c].len();
            for j in 0..n {
                let host = self.hosts[node].as_ref().unwrap();
                let k = (host.flow_rr[c] + j) % n;
                let fi = host.classes[c][k];
                let f = &mut self.flows[fi];
                if f.tx.next_to_send().is_none() {
                    continue;
                }
                if f.next_allowed > self.now {
                    earliest = Some(earliest.map_or(f.next_allowed, |e: SimTime| e.min(f.next_allowed)));
                    continue;
                }
                let outstanding = f.tx.outstanding();
                if let Some(w) = self.flow_window(&self.flows[fi]) {
                    if outstanding > 0 && (outstanding + 1) * wire_max > w {
                        continue;
                    }
                }
                let host = self.hosts[node].as_mut().unwrap();
                host.flow_rr[c] = (k + 1) % n;
                self.ports[node][0].rr = (c + 1) % CLASSES;
                self.send_data(fi);
                return;
            }
        }
        if let Some(t) = earliest {
            let host = self.hosts[node].as_mut().unwrap();
            if host.wake_at.is_none_or(|w| w > t) {
                host.wake_at = Some(t);
                self.push(t, node, 0, Event::HostWake);
            }
        }
    }

    fn payload(&self, fi: usize, seq: u64) -> u64 {
        let f = &self.flows[fi];
        if seq + 1 == f.packets {
            f.spec.bytes - (f.packets - 1) * self.cfg.max_payload
        } else {
            self.cfg.max_payload
        }
    }

    fn send_data(&mut self, fi: usize) {
        let now = self.now;
        let payload_of_last = self.payload(fi, self.flows[fi].packets - 1);
        let max_payload = self.cfg.max_payload;
        let header = self.cfg.header_bytes;
        let f = &mut self.flows[fi];
        let seq = f.tx.next_to_send().expect("eligible flow has data");
        let resend = f.tx.mark_sent(seq);
        let payload = if seq + 1 == f.packets {
            payload_of_last
        } else {
            max_payload
        };
        let mut pkt = Packet::data(f.spec.id, seq, payload, header, f.spec.class, f.spec.src, f.spec.dst);
        pkt.epoch = f.tx.epoch();
        pkt.sent_at = now;
        pkt.attempt = f.attempts[seq as usize];
        f.attempts[seq as usize] += 1;
        f.sent_at[seq as usize] = now;
        let wire = pkt.wire_bytes();
        let ser = self.bandwidth.serialization(wire);
        if resend {
            f.record.retx_bytes += payload;
        } else if seq + 1 == f.packets {
            f.record.injection_done = Some(now + ser);
        }
        f.next_allowed = match &f.cc {
            Some(cc) if cc.mode() == CcMode::Rate => now + cc.rate().serialization(wire),
            _ => now,
        };
        self.counters.injected_wire_bytes += wire;
        let node = f.src_node;
        self.arm_rto(fi);
        self.transmit(node, 0, pkt);
    }

    fn transmit(&mut self, node: NodeId, port: usize, pkt: Packet) {
        let wire = pkt.wire_bytes();
        let ser = self.bandwidth.serialization(wire);
        let rt = &mut self.ports[node][port];
        rt.busy = true;
        let loss_p = rt.loss_p;
        let done = self.now + ser;
        self.push(done, node, port, Event::TxDone);
        if pkt.kind == PacketKind::Data && loss_p > 0.0 {
            let h = mix_all(&[
                self.scenario.seed,
                node as u64,
                port as u64,
                pkt.flow as u64,
                pkt.seq,
                pkt.attempt as u64,
            ]);
            if unit_interval(h) < loss_p {
                self.counters.loss_drops += 1;
                self.drop_packet(&pkt);
                return;
            }
        }
        let peer = self.topo.nodes[node].ports[port];
        // switches cut through on the head; hosts consume the tail
        let mut at = self.now + self.latency;
        if self.topo.is_host(peer.peer) {
            at += ser;
        }
        self.push(at, peer.peer, peer.peer_port, Event::Arrive(pkt));
    }

    fn drop_packet(&mut self, pkt: &Packet) {
        let wire = pkt.wire_bytes();
        self.counters.dropped_wire_bytes += wire;
        let r = &mut self.flows[pkt.flow as usize].record;
        r.drops += 1;
        r.dropped_bytes += pkt.payload_bytes;
    }

    fn on_tx_done(&mut self, node: NodeId, port: usize) {
        let rt = &mut self.ports[node][port];
        rt.busy = false;
        if let Some((ingress, class, bytes)) = rt.in_tx.take() {
            let action = self.ports[node][ingress]
                .ingress
                .update(class, -(bytes as i64))
                .expect("release cannot overflow");
            if let Some(a) = action {
                self.send_pfc(node, ingress, a);
            }
        }
        self.try_start(node, port);
    }

    fn on_arrive(&mut self, node: NodeId, port: usize, pkt: Packet) {
        if self.hosts[node].is_some() {
            self.on_host_arrive(pkt);
            return;
        }
        let dst = pkt.dst;
        if pkt.kind.is_control() {
            let egress = self
                .router
                .select_control(node, pkt.flow, self.topo.candidates(node, dst));
            self.ports[node][egress].control.push_back(pkt);
            self.try_start(node, egress);
            return;
        }
        let class = pkt.class;
        let wire = pkt.wire_bytes();
        match self.ports[node][port].ingress.update(class, wire as i64) {
            Err(_) => {
                self.counters.overflow_drops += 1;
                self.ports[node][port].ingress_drops[class as usize] += 1;
                self.drop_packet(&pkt);
                return;
            }
            Ok(Some(action)) => self.send_pfc(node, port, action),
            Ok(None) => {}
        }
        let occ = self.ports[node][port].ingress.occupancy[class as usize];
        self.counters.peak_occupancy_bytes = self.counters.peak_occupancy_bytes.max(occ);

        let egress = self
            .router
            .select(node, pkt.flow, self.now, self.topo.candidates(node, dst));
        let rt = &mut self.ports[node][egress];
        let mut pkt = pkt;
        if let Some(th) = self.cfg.ecn_threshold {
            if rt.queued_bytes[class as usize] > th && !pkt.ecn_marked {
                pkt.ecn_marked = true;
                rt.ecn_marks[class as usize] += 1;
                self.counters.ecn_marks += 1;
            }
        }
        rt.queued_bytes[class as usize] += wire;
        rt.queues[class as usize].push_back(Queued { pkt, ingress: port });
        self.try_start(node, egress);
    }

    // ---- endpoints ----

    fn send_control(&mut self, from_host: usize, mut pkt: Packet) {
        pkt.sent_at = self.now;
        let node = self.topo.hosts[from_host];
        self.ports[node][0].control.push_back(pkt);
        self.try_start(node, 0);
    }

    fn on_host_arrive(&mut self, pkt: Packet) {
        match pkt.kind {
            PacketKind::Data => {
                self.counters.arrived_wire_bytes += pkt.wire_bytes();
                self.on_data(pkt);
            }
            PacketKind::Ack => self.on_ack(pkt),
            PacketKind::Nack => self.on_nack(pkt),
            PacketKind::Cnp => self.on_cnp(pkt),
            PacketKind::Pause | PacketKind::Resume => unreachable!("pause frames travel out of band"),
        }
    }

    fn on_data(&mut self, pkt: Packet) {
        let fi = pkt.flow as usize;
        let now = self.now;
        let (src, dst, class, id) = {
            let s = &self.flows[fi].spec;
            (s.src, s.dst, s.class, s.id)
        };
        if pkt.ecn_marked && self.cfg.cc.is_some() {
            let f = &mut self.flows[fi];
            if f.last_cnp.is_none_or(|t| now >= t + f.base_rtt) {
                f.last_cnp = Some(now);
                self.counters.cnps += 1;
                self.send_control(dst, Packet::control(PacketKind::Cnp, id, 0, class, dst, src));
            }
        }
        let packets = self.flows[fi].packets;
        let mut delivered_seqs = 0..0;
        let reply = match &mut self.flows[fi].rx {
            ReceiverRx::Gbn { expected, last_nack } => match gbn_on_receive(*expected, pkt.seq) {
                GbnReceive::Deliver { next_expected } => {
                    delivered_seqs = *expected..next_expected;
                    *expected = next_expected;
                    Some(Packet::control(PacketKind::Ack, id, next_expected, class, dst, src))
                }
                GbnReceive::DiscardAndNack { expected } => {
                    if *last_nack != Some((expected, pkt.epoch)) {
                        *last_nack = Some((expected, pkt.epoch));
                        let mut n = Packet::control(PacketKind::Nack, id, expected, class, dst, src);
                        n.epoch = pkt.epoch;
                        Some(n)
                    } else {
                        None
                    }
                }
                GbnReceive::DiscardDuplicate => Some(Packet::control(PacketKind::Ack, id, *expected, class, dst, src)),
            },
            ReceiverRx::Sel(rx) => {
                let before = rx.next_expected();
                match rx.sack_update(pkt.seq) {
                    Ok((rec, n)) => {
                        delivered_seqs = before..before + n;
                        let mut a = Packet::control(PacketKind::Ack, id, rec.next_expected, class, dst, src);
                        a.sack = rec.ranges;
                        a.sack.truncate(MAX_SACK_RANGES);
                        Some(a)
                    }
                    Err(_) => {
                        self.counters.reorder_overflows += 1;
                        None
                    }
                }
            }
        };
        if !delivered_seqs.is_empty() {
            let bytes: u64 = delivered_seqs.clone().map(|s| self.payload(fi, s)).sum();
            self.flows[fi].record.delivered_bytes += bytes;
            self.progress();
            if delivered_seqs.end == packets && !self.flows[fi].finished {
                self.finish_flow(fi);
            }
        }
        if let Some(r) = reply {
            self.send_control(dst, r);
        }
    }

    fn finish_flow(&mut self, fi: usize) {
        let now = self.now;
        let f = &mut self.flows[fi];
        f.finished = true;
        f.record.finish = Some(now);
        self.active -= 1;
        let dependents = std::mem::take(&mut f.dependents);
        for &d in &dependents {
            let g = &mut self.flows[d];
            g.deps_remaining -= 1;
            g.ready_at = g.ready_at.max(now);
            if g.deps_remaining == 0 {
                let delay = match &g.spec.release {
                    Release::After { delay, .. } => *delay,
                    Release::At(_) => SimTime::ZERO,
                };
                let at = g.ready_at + delay;
                let node = g.src_node;
                self.push(at, node, 0, Event::Release(d));
            }
        }
        self.flows[fi].dependents = dependents;
    }

    fn on_release(&mut self, fi: usize) {
        let now = self.now;
        if self.active == 0 {
            self.last_progress = now;
        }
        self.active += 1;
        let f = &mut self.flows[fi];
        f.released = true;
        f.record.start = Some(now);
        f.next_allowed = now;
        let (node, class) = (f.src_node, f.spec.class as usize);
        self.hosts[node].as_mut().unwrap().classes[class].push(fi);
        self.try_start(node, 0);
    }

    fn retire_sender(&mut self, fi: usize) {
        let f = &mut self.flows[fi];
        f.sender_done = true;
        f.rto_deadline = None;
        let (node, class) = (f.src_node, f.spec.class as usize);
        let host = self.hosts[node].as_mut().unwrap();
        host.classes[class].retain(|&x| x != fi);
        let n = host.classes[class].len();
        if n > 0 {
            host.flow_rr[class] %= n;
        } else {
            host.flow_rr[class] = 0;
        }
    }

    fn after_ack_progress(&mut self, fi: usize) {
        let now = self.now;
        let timeout = self.cfg.timeout;
        let f = &mut self.flows[fi];
        f.backoff = 0;
        if f.tx.done() {
            self.retire_sender(fi);
            return;
        }
        f.rto_deadline = (f.tx.outstanding() > 0).then(|| now + timeout);
        self.arm_rto(fi);
    }

    fn on_ack(&mut self, pkt: Packet) {
        let fi = pkt.flow as usize;
        if self.flows[fi].sender_done {
            return;
        }
        let now = self.now;
        let f = &mut self.flows[fi];
        let progressed = match &mut f.tx {
            SenderTx::Gbn(s) => s.on_ack(pkt.seq),
            SenderTx::Sel(s) => s.on_ack(&AckRecord {
                next_expected: pkt.seq,
                ranges: pkt.sack,
            }),
        };
        if let Some(cc) = f.cc.as_mut() {
            cc.update(CcEvent::Ack(now));
        }
        if progressed {
            self.after_ack_progress(fi);
        }
        let node = self.flows[fi].src_node;
        self.try_start(node, 0);
    }

    fn on_nack(&mut self, pkt: Packet) {
        let fi = pkt.flow as usize;
        if self.flows[fi].sender_done {
            return;
        }
        let now = self.now;
        let f = &mut self.flows[fi];
        let SenderTx::Gbn(s) = &mut f.tx else { return };
        if let NackOutcome::Rewound { from, high_sent } = s.on_nack(pkt.seq, pkt.epoch, now) {
            f.record.rewinds += 1;
            let measured_rtt = now - f.sent_at[from as usize];
            let saturated = high_sent < f.packets;
            let resent: u64 = (from + 1..high_sent)
                .map(|q| self.payload(fi, q) + self.cfg.header_bytes)
                .sum();
            self.rewinds.push(RewindRecord {
                flow_id: pkt.flow,
                nack_seq: from,
                resent_wire_bytes: resent,
                measured_rtt,
                saturated,
            });
            self.after_ack_progress(fi);
        }
        let node = self.flows[fi].src_node;
        self.try_start(node, 0);
    }

    fn on_cnp(&mut self, pkt: Packet) {
        let fi = pkt.flow as usize;
        let now = self.now;
        let f = &mut self.flows[fi];
        if f.record.first_feedback.is_none() {
            f.record.first_feedback = Some(now);
        }
        if f.sender_done {
            return;
        }
        let Some(cc) = f.cc.as_mut() else { return };
        cc.update(CcEvent::Feedback(now));
        if cc.recovering() && !f.cc_tick_pending {
            f.cc_tick_pending = true;
            let at = now + self.cfg.cc.unwrap().increase_period;
            let node = f.src_node;
            self.push(at, node, 0, Event::CcTick(fi));
        }
    }

    fn on_cc_tick(&mut self, fi: usize) {
        let now = self.now;
        let f = &mut self.flows[fi];
        f.cc_tick_pending = false;
        if f.sender_done {
            return;
        }
        let cc = f.cc.as_mut().unwrap();
        cc.update(CcEvent::TimerTick(now));
        if cc.recovering() {
            f.cc_tick_pending = true;
            let at = now + self.cfg.cc.unwrap().increase_period;
            let node = f.src_node;
            self.push(at, node, 0, Event::CcTick(fi));
        }
        let node = self.flows[fi].src_node;
        self.try_start(node, 0);
    }

    fn arm_rto(&mut self, fi: usize) {
        let now = self.now;
        let timeout = self.cfg.timeout;
        let f = &mut self.flows[fi];
        if f.sender_done || timeout == SimTime::ZERO {
            return;
        }
        let deadline = *f.rto_deadline.get_or_insert(now + timeout * (1u64 << f.backoff));
        if !f.rto_pending {
            f.rto_pending = true;
            let node = f.src_node;
            self.push(deadline, node, 0, Event::Rto(fi));
        }
    }

    fn on_rto(&mut self, fi: usize) {
        let now = self.now;
        let f = &mut self.flows[fi];
        f.rto_pending = false;
        let Some(deadline) = f.rto_deadline else { return };
        if f.sender_done {
            return;
        }
        if deadline > now {
            f.rto_pending = true;
            let node = f.src_node;
            self.push(deadline, node, 0, Event::Rto(fi));
            return;
        }
        let fired = match &mut f.tx {
            SenderTx::Gbn(s) => s.on_timeout(now).is_some(),
            SenderTx::Sel(s) => {
                let n = s.on_timeout();
                f.record.timeout_requeued_bytes += n * self.cfg.max_payload;
                n > 0
            }
        };
        if fired {
            f.record.timeouts += 1;
        }
        f.backoff = (f.backoff + 1).min(MAX_BACKOFF);
        f.rto_deadline = None;
        self.arm_rto(fi);
        let node = self.flows[fi].src_node;
        self.try_start(node, 0);
    }

    // ---- sampling and wrap-up ----

    fn take_samples(&mut self) {
        for (n, ports) in self.ports.iter_mut().enumerate() {
            for (p, rt) in ports.iter_mut().enumerate() {
                for c in 0..self.classes {
                    let s = SampleState {
                        occupancy: rt.ingress.occupancy[c],
                        paused: rt.paused[c],
                        marks: rt.ecn_marks[c],
                        drops: rt.ingress_drops[c],
                    };
                    let nonzero = s.occupancy > 0 || s.paused;
                    if s != rt.last_sample[c] || nonzero {
                        rt.last_sample[c] = s;
                        self.samples.push(PortSample {
                            time: self.now,
                            node: self.topo.nodes[n].name.clone(),
                            port: p,
                            class: c as u8,
                            occupancy_bytes: s.occupancy,
                            paused: s.paused,
                            ecn_marks: s.marks,
                            drops: s.drops,
                        });
                    }
                }
            }
        }
    }

    fn finish(&mut self) -> RunMetrics {
        if !self.flows.is_empty() {
            self.take_samples();
        }
        let mut in_flight = 0;
        for s in self.heap.iter() {
            if let Event::Arrive(p) = &s.ev {
                if p.kind == PacketKind::Data {
                    in_flight += p.wire_bytes();
                }
            }
        }
        for ports in &self.ports {
            for rt in ports {
                in_flight += rt.queued_bytes.iter().sum::<u64>();
            }
        }
        self.counters.in_flight_wire_bytes = in_flight;
        RunMetrics {
            scenario_id: self.scenario.name.clone(),
            flows: self.flows.iter().map(|f| f.record.clone()).collect(),
            ports: std::mem::take(&mut self.samples),
            rewinds: std::mem::take(&mut self.rewinds),
            counters: self.counters.clone(),
            headroom_bytes: self.cfg.headroom_bytes,
            end_time: self.now,
            wall_clock: Default::default(),
        }
    }
}

fn link(topo: &Topology, from: &str, to: &str) -> Result<(NodeId, usize), SimError> {
    let a = topo.node_by_name(from)?;
    let b = topo.node_by_name(to)?;
    let port = topo
        .port_towards(a, b)
        .ok_or_else(|| TopologyError::UnknownLink(from.to_string(), to.to_string()))?;
    Ok((a, port))
}
