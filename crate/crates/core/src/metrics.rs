//! Run metrics, summaries and their CSV forms.

use std::io::{self, Write};
use std::time::Duration;

use crate::sim::packet::FlowId;
use crate::units::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub flow_id: FlowId,
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    pub class: u8,
    /// Release time; `None` if the flow never became eligible.
    pub start: Option<SimTime>,
    pub finish: Option<SimTime>,
    /// Payload bytes sent again after their first transmission.
    pub retx_bytes: u64,
    pub drops: u64,
    pub dropped_bytes: u64,
    /// Time the last new byte left the sender's NIC.
    pub injection_done: Option<SimTime>,
    /// First congestion notification received by the sender.
    pub first_feedback: Option<SimTime>,
    pub rewinds: u64,
    pub timeouts: u64,
    /// Payload bytes the selective sender queued again because of timeouts.
    pub timeout_requeued_bytes: u64,
    pub delivered_bytes: u64,
}

impl FlowRecord {
    pub fn fct(&self) -> Option<SimTime> {
        Some(self.finish? - self.start?)
    }

    pub fn goodput_gbps(&self) -> Option<f64> {
        let fct = self.fct()?;
        (fct > SimTime::ZERO).then(|| self.bytes as f64 * 8.0 / fct.as_ns_f64())
    }
}

/// One go-back-n rewind triggered by a NACK.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewindRecord {
    pub flow_id: FlowId,
    pub nack_seq: u64,
    /// Wire bytes sent after the lost packet that the rewind sends again.
    pub resent_wire_bytes: u64,
    /// From the lost packet's transmission to the NACK's arrival.
    pub measured_rtt: SimTime,
    /// The sender had not run out of new data when the NACK arrived.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSample {
    pub time: SimTime,
    pub node: String,
    pub port: usize,
    pub class: u8,
    /// Ingress occupancy of this port and class.
    pub occupancy_bytes: u64,
    /// The egress of this port is paused by its peer.
    pub paused: bool,
    /// Cumulative marks applied at this egress.
    pub ecn_marks: u64,
    /// Cumulative ingress drops.
    pub drops: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalCounters {
    pub pause_frames: u64,
    pub resume_frames: u64,
    /// Indexed by the tier of the paused node (0 = host).
    pub pause_frames_by_tier: [u64; 4],
    pub first_pause_by_tier: [Option<SimTime>; 4],
    /// Most tiers holding a paused egress at the same instant.
    pub max_paused_tiers: u32,
    pub max_paused_ports: u64,
    pub peak_occupancy_bytes: u64,
    pub overflow_drops: u64,
    pub loss_drops: u64,
    pub ecn_marks: u64,
    pub cnps: u64,
    pub reorder_overflows: u64,
    pub injected_wire_bytes: u64,
    pub arrived_wire_bytes: u64,
    pub dropped_wire_bytes: u64,
    pub in_flight_wire_bytes: u64,
    pub events: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub scenario_id: String,
    pub flows: Vec<FlowRecord>,
    pub ports: Vec<PortSample>,
    pub rewinds: Vec<RewindRecord>,
    pub counters: GlobalCounters,
    pub headroom_bytes: u64,
    pub end_time: SimTime,
    pub wall_clock: Duration,
}

impl RunMetrics {
    pub fn total_drops(&self) -> u64 {
        self.counters.overflow_drops + self.counters.loss_drops
    }

    pub fn write_flows_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "scenario_id,flow_id,src,dst,bytes,start_ns,fct_ns,goodput_gbps,retx_bytes,drops"
        )?;
        for f in &self.flows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                self.scenario_id,
                f.flow_id,
                f.src,
                f.dst,
                f.bytes,
                f.start.map(fmt_ns).unwrap_or_default(),
                f.fct().map(fmt_ns).unwrap_or_default(),
                f.goodput_gbps().map(|g| format!("{g:.3}")).unwrap_or_default(),
                f.retx_bytes,
                f.drops
            )?;
        }
        Ok(())
    }

    pub fn write_ports_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_ns,node,port,class,occupancy_bytes,paused,ecn_marks,drops")?;
        for p in &self.ports {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                fmt_ns(p.time),
                p.node,
                p.port,
                p.class,
                p.occupancy_bytes,
                u8::from(p.paused),
                p.ecn_marks,
                p.drops
            )?;
        }
        Ok(())
    }
}

/// Nanoseconds with picosecond precision, without trailing zeros.
pub fn fmt_ns(t: SimTime) -> String {
    let ps = t.as_ps();
    let whole = ps / 1000;
    let frac = ps % 1000;
    if frac == 0 {
        whole.to_string()
    } else {
        format!("{whole}.{frac:03}").trim_end_matches('0').to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub flows: usize,
    pub completed: usize,
    pub p50_fct: Option<SimTime>,
    pub p99_fct: Option<SimTime>,
    pub aggregate_goodput_gbps: Option<f64>,
    pub total_retx_bytes: u64,
    pub total_drops: u64,
    pub peak_occupancy_bytes: u64,
    pub pause_frames: u64,
}

/// Nearest-rank percentile of sorted values: the smallest value with at least `pct`% at or below it.
pub fn nearest_rank<T: Copy>(sorted: &[T], pct: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn summarize(m: &RunMetrics) -> Summary {
    let mut fcts: Vec<SimTime> = m.flows.iter().filter_map(FlowRecord::fct).collect();
    fcts.sort_unstable();
    let done: Vec<&FlowRecord> = m.flows.iter().filter(|f| f.fct().is_some()).collect();
    let aggregate_goodput_gbps = if done.is_empty() {
        None
    } else {
        let first = done.iter().filter_map(|f| f.start).min().unwrap();
        let last = done.iter().filter_map(|f| f.finish).max().unwrap();
        let bytes: u64 = done.iter().map(|f| f.bytes).sum();
        let span = last - first;
        (span > SimTime::ZERO).then(|| bytes as f64 * 8.0 / span.as_ns_f64())
    };
    Summary {
        flows: m.flows.len(),
        completed: done.len(),
        p50_fct: nearest_rank(&fcts, 50.0),
        p99_fct: nearest_rank(&fcts, 99.0),
        aggregate_goodput_gbps,
        total_retx_bytes: m.flows.iter().map(|f| f.retx_bytes).sum(),
        total_drops: m.total_drops(),
        peak_occupancy_bytes: m.counters.peak_occupancy_bytes,
        pause_frames: m.counters.pause_frames,
    }
}
