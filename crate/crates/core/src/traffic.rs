//! Flow schedules for incast, oblivious bulk-synchronous and
//! latency-sensitive chain workloads.
//!
//! Generators are pure functions of their spec and seed.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::mix_all;
use crate::sim::packet::FlowId;
use crate::units::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("host {host} out of range ({hosts} hosts)")]
    HostOutOfRange { host: usize, hosts: usize },
    #[error("destination {0} is also a source")]
    DestinationIsSource(usize),
    #[error("{motif} needs {needed} hosts, topology has {available}")]
    TooFewHosts {
        motif: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("priority class {0} does not fit in three bits")]
    Class(u8),
    #[error("flow {0} sends to itself")]
    SelfFlow(usize),
    #[error("{name} must be a finite non-negative duration, got {value}")]
    Duration { name: &'static str, value: f64 },
}

fn default_class() -> u8 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncastSpec {
    pub sources: u32,
    pub destination: usize,
    pub transaction_bytes: u64,
    #[serde(default)]
    pub start_jitter_us: f64,
    /// Explicit source hosts; defaults to round-robin over every other host.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hosts: Option<Vec<usize>>,
    #[serde(default = "default_class")]
    pub class: u8,
    #[serde(default)]
    pub start_us: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsPattern {
    #[default]
    Permutation,
    AllToAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSpec {
    pub processes: u32,
    pub steps: u32,
    #[serde(default)]
    pub compute_us: f64,
    pub bytes_per_peer: u64,
    #[serde(default)]
    pub pattern: ObsPattern,
    /// Host of each process; defaults to hosts `0..processes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosts: Option<Vec<usize>>,
    #[serde(default = "default_class")]
    pub class: u8,
    #[serde(default)]
    pub start_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsChainSpec {
    pub depth: u32,
    pub bytes: u64,
    /// Response size; defaults to `bytes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_bytes: Option<u64>,
    pub client: usize,
    pub server: usize,
    #[serde(default = "default_class")]
    pub class: u8,
    #[serde(default)]
    pub start_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitFlow {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    #[serde(default)]
    pub start_us: f64,
    #[serde(default = "default_class")]
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowListSpec {
    pub flows: Vec<ExplicitFlow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "motif", rename_all = "snake_case")]
pub enum Motif {
    Incast(IncastSpec),
    Obs(ObsSpec),
    LsChain(LsChainSpec),
    Flows(FlowListSpec),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Release {
    At(SimTime),
    /// After every listed flow completes, plus a fixed delay.
    After {
        deps: Vec<FlowId>,
        delay: SimTime,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    pub id: FlowId,
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    pub class: u8,
    pub release: Release,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    pub flows: Vec<FlowSpec>,
}

impl Schedule {
    pub fn total_bytes(&self) -> u64 {
        self.flows.iter().map(|f| f.bytes).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    /// Appends another schedule, renumbering its flows after ours.
    pub fn extend(&mut self, other: Schedule) {
        let offset = self.flows.len() as FlowId;
        for mut f in other.flows {
            f.id += offset;
            if let Release::After { deps, .. } = &mut f.release {
                for d in deps.iter_mut() {
                    *d += offset;
                }
            }
            self.flows.push(f);
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "flow_id,src,dst,bytes,class,release_ns,deps,delay_ns")?;
        for f in &self.flows {
            let (at, deps, delay) = match &f.release {
                Release::At(t) => (format!("{}", t.as_ns_f64()), String::new(), String::new()),
                Release::After { deps, delay } => (
                    String::new(),
                    deps.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "),
                    format!("{}", delay.as_ns_f64()),
                ),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                f.id, f.src, f.dst, f.bytes, f.class, at, deps, delay
            )?;
        }
        Ok(())
    }
}

fn check_host(host: usize, hosts: usize) -> Result<(), TrafficError> {
    if host >= hosts {
        Err(TrafficError::HostOutOfRange { host, hosts })
    } else {
        Ok(())
    }
}

fn check_class(class: u8) -> Result<(), TrafficError> {
    if class >= 8 {
        Err(TrafficError::Class(class))
    } else {
        Ok(())
    }
}

fn duration(name: &'static str, us: f64) -> Result<SimTime, TrafficError> {
    if us.is_finite() && us >= 0.0 {
        Ok(SimTime::from_us_f64(us))
    } else {
        Err(TrafficError::Duration { name, value: us })
    }
}

pub fn gen_incast(spec: &IncastSpec, hosts: usize, rng: &mut ChaCha8Rng) -> Result<Schedule, TrafficError> {
    if spec.sources == 0 {
        return Err(TrafficError::ZeroCount("sources"));
    }
    if spec.transaction_bytes == 0 {
        return Err(TrafficError::ZeroCount("transaction_bytes"));
    }
    check_class(spec.class)?;
    check_host(spec.destination, hosts)?;
    let start = duration("start_us", spec.start_us)?;
    let jitter = duration("start_jitter_us", spec.start_jitter_us)?;
    let pool: Vec<usize> = match &spec.source_hosts {
        Some(list) => {
            for &h in list {
                check_host(h, hosts)?;
                if h == spec.destination {
                    return Err(TrafficError::DestinationIsSource(h));
                }
            }
            if list.is_empty() {
                return Err(TrafficError::ZeroCount("source_hosts"));
            }
            list.clone()
        }
        None => (0..hosts).filter(|&h| h != spec.destination).collect(),
    };
    if pool.is_empty() {
        return Err(TrafficError::TooFewHosts {
            motif: "incast",
            needed: 2,
            available: hosts,
        });
    }
    let flows = (0..spec.sources as usize)
        .map(|i| {
            let offset = if jitter == SimTime::ZERO {
                SimTime::ZERO
            } else {
                SimTime::from_ps(rng.gen_range(0..=jitter.as_ps()))
            };
            FlowSpec {
                id: i as FlowId,
                src: pool[i % pool.len()],
                dst: spec.destination,
                bytes: spec.transaction_bytes,
                class: spec.class,
                release: Release::At(start + offset),
            }
        })
        .collect();
    Ok(Schedule { flows })
}

/// Uniform permutation of `0..n` without fixed points, by rejection.
pub fn derangement(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    assert!(n >= 2, "no derangement of fewer than two elements");
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &x)| i != x) {
            return p;
        }
    }
}

pub fn gen_obs(spec: &ObsSpec, hosts: usize, rng: &mut ChaCha8Rng) -> Result<Schedule, TrafficError> {
    if spec.steps == 0 {
        return Ok(Schedule::default());
    }
    if spec.bytes_per_peer == 0 {
        return Err(TrafficError::ZeroCount("bytes_per_peer"));
    }
    check_class(spec.class)?;
    let p = spec.processes as usize;
    if p < 2 {
        return Err(TrafficError::TooFewHosts {
            motif: "obs",
            needed: 2,
            available: p,
        });
    }
    let placement: Vec<usize> = match &spec.hosts {
        Some(list) => list.clone(),
        None => (0..p).collect(),
    };
    if placement.len() != p {
        return Err(TrafficError::TooFewHosts {
            motif: "obs",
            needed: p,
            available: placement.len(),
        });
    }
    for &h in &placement {
        check_host(h, hosts)?;
    }
    let start = duration("start_us", spec.start_us)?;
    let compute = duration("compute_us", spec.compute_us)?;

    let mut flows = Vec::new();
    let mut previous: Vec<FlowId> = Vec::new();
    for _ in 0..spec.steps {
        let pairs: Vec<(usize, usize)> = match spec.pattern {
            ObsPattern::AllToAll => (0..p)
                .flat_map(|s| (0..p).filter(move |&d| d != s).map(move |d| (s, d)))
                .collect(),
            ObsPattern::Permutation => derangement(p, rng).into_iter().enumerate().collect(),
        };
        let release = if previous.is_empty() {
            Release::At(start + compute)
        } else {
            Release::After {
                deps: previous.clone(),
                delay: compute,
            }
        };
        let mut this_step = Vec::with_capacity(pairs.len());
        for (s, d) in pairs {
            let id = flows.len() as FlowId;
            flows.push(FlowSpec {
                id,
                src: placement[s],
                dst: placement[d],
                bytes: spec.bytes_per_peer,
                class: spec.class,
                release: release.clone(),
            });
            this_step.push(id);
        }
        previous = this_step;
    }
    Ok(Schedule { flows })
}

pub fn gen_ls_chain(spec: &LsChainSpec, hosts: usize) -> Result<Schedule, TrafficError> {
    if spec.depth == 0 {
        return Ok(Schedule::default());
    }
    let response = spec.response_bytes.unwrap_or(spec.bytes);
    if spec.bytes == 0 || response == 0 {
        return Err(TrafficError::ZeroCount("bytes"));
    }
    check_class(spec.class)?;
    check_host(spec.client, hosts)?;
    check_host(spec.server, hosts)?;
    if spec.client == spec.server {
        return Err(TrafficError::SelfFlow(spec.client));
    }
    let start = duration("start_us", spec.start_us)?;
    let mut flows: Vec<FlowSpec> = Vec::with_capacity(2 * spec.depth as usize);
    for _ in 0..spec.depth {
        for (src, dst, bytes) in [
            (spec.client, spec.server, spec.bytes),
            (spec.server, spec.client, response),
        ] {
            let id = flows.len() as FlowId;
            let release = match id {
                0 => Release::At(start),
                _ => Release::After {
                    deps: vec![id - 1],
                    delay: SimTime::ZERO,
                },
            };
            flows.push(FlowSpec {
                id,
                src,
                dst,
                bytes,
                class: spec.class,
                release,
            });
        }
    }
    Ok(Schedule { flows })
}

fn gen_flows(spec: &FlowListSpec, hosts: usize) -> Result<Schedule, TrafficError> {
    let mut flows = Vec::with_capacity(spec.flows.len());
    for (i, f) in spec.flows.iter().enumerate() {
        check_host(f.src, hosts)?;
        check_host(f.dst, hosts)?;
        check_class(f.class)?;
        if f.src == f.dst {
            return Err(TrafficError::SelfFlow(i));
        }
        if f.bytes == 0 {
            return Err(TrafficError::ZeroCount("bytes"));
        }
        flows.push(FlowSpec {
            id: i as FlowId,
            src: f.src,
            dst: f.dst,
            bytes: f.bytes,
            class: f.class,
            release: Release::At(duration("start_us", f.start_us)?),
        });
    }
    Ok(Schedule { flows })
}

impl Motif {
    /// Generates this motif's flows; `index` separates the random streams of several motifs.
    pub fn generate(&self, hosts: usize, seed: u64, index: usize) -> Result<Schedule, TrafficError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_all(&[seed, index as u64]));
        match self {
            Motif::Incast(s) => gen_incast(s, hosts, &mut rng),
            Motif::Obs(s) => gen_obs(s, hosts, &mut rng),
            Motif::LsChain(s) => gen_ls_chain(s, hosts),
            Motif::Flows(s) => gen_flows(s, hosts),
        }
    }
}

/// Concatenates the schedules of every motif in order.
pub fn build_schedule(motifs: &[Motif], hosts: usize, seed: u64) -> Result<Schedule, TrafficError> {
    let mut all = Schedule::default();
    for (i, m) in motifs.iter().enumerate() {
        all.extend(m.generate(hosts, seed, i)?);
    }
    Ok(all)
}
