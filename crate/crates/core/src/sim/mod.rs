//! Deterministic packet-level simulator of PFC/ECN fat-tree fabrics.
//!
//! One run is single-threaded. Events are ordered by
//! `(time, node, port, kind, insertion)` so identical scenarios replay
//! bit-identically.

pub mod cc;
mod engine;
pub mod gbn;
pub mod packet;
pub mod pfc;
pub mod routing;
pub mod scenario;
pub mod selective;
pub mod topology;

use thiserror::Error;

pub use engine::{run, DeadlockReport};
pub use scenario::Scenario;
pub use topology::{NodeId, Topology};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("topology: {0}")]
    Topology(#[from] topology::TopologyError),
    #[error("traffic: {0}")]
    Traffic(#[from] crate::traffic::TrafficError),
    #[error("deadlock watchdog fired at {}: no delivery progress since {}", .0.time, .0.last_progress)]
    Deadlock(Box<DeadlockReport>),
}

/// SplitMix64 finalizer; the only hash the simulator uses for routing and loss decisions.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn mix_all(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908, |acc, &p| mix64(acc ^ p))
}

/// Maps a hash to a uniform value in `[0, 1)`.
pub(crate) fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
