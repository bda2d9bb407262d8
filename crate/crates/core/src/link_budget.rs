//! Headroom-buffer sizing, round-trip construction and bandwidth-delay products.
//!
//! Byte results are rounded up: a lossless reservation must never be short.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::units::{Bandwidth, SimTime};

/// Physical parameters of one point-to-point link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub bandwidth: Bandwidth,
    pub cable_length_m: f64,
    pub wire_delay_ns_per_m: f64,
    /// Arbitration, FEC and serialization cost paid at every hop.
    pub per_hop_latency: SimTime,
    pub mtu_bytes: u64,
}

impl LinkGeometry {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.bandwidth.bps() == 0 {
            return Err(ModelError::Domain {
                name: "bandwidth",
                value: 0.0,
                expected: "(0, inf)",
            });
        }
        for (name, v) in [
            ("cable_length_m", self.cable_length_m),
            ("wire_delay_ns_per_m", self.wire_delay_ns_per_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::Domain {
                    name,
                    value: v,
                    expected: "[0, inf)",
                });
            }
        }
        Ok(())
    }

    /// Cable propagation delay plus the per-hop cost, one direction.
    pub fn one_way_latency(&self) -> SimTime {
        SimTime::from_ns_f64(self.cable_length_m * self.wire_delay_ns_per_m) + self.per_hop_latency
    }
}

/// Switch-level shape used to aggregate per-port headroom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricShape {
    pub ports_per_switch: u32,
    pub priority_classes: u32,
    pub tiers: u32,
    pub hop_count_rtt: u32,
}

/// PFC encodes the class in three bits.
pub const MAX_PRIORITY_CLASSES: u32 = 8;

impl FabricShape {
    pub fn new(
        ports_per_switch: u32,
        priority_classes: u32,
        tiers: u32,
        hop_count_rtt: u32,
    ) -> Result<Self, ModelError> {
        if !(1..=MAX_PRIORITY_CLASSES).contains(&priority_classes) {
            return Err(ModelError::Domain {
                name: "priority_classes",
                value: priority_classes as f64,
                expected: "[1, 8]",
            });
        }
        if ports_per_switch == 0 {
            return Err(ModelError::Domain {
                name: "ports_per_switch",
                value: 0.0,
                expected: "[1, inf)",
            });
        }
        if tiers == 0 {
            return Err(ModelError::Domain {
                name: "tiers",
                value: 0.0,
                expected: "[1, inf)",
            });
        }
        Ok(FabricShape {
            ports_per_switch,
            priority_classes,
            tiers,
            hop_count_rtt,
        })
    }
}

/// Round trip over a single link: `2 * (cable * wire_delay + per_hop)`.
pub fn link_rtt(geometry: &LinkGeometry) -> SimTime {
    geometry.one_way_latency() * 2
}

/// End-to-end round trip approximated as `hop_count_rtt` hops of equal latency.
pub fn fabric_rtt(hop_count_rtt: u32, per_hop_latency: SimTime) -> SimTime {
    per_hop_latency * hop_count_rtt as u64
}

/// Minimum lossless reservation for one port and class: `BW * RTT + MTU`.
pub fn headroom_per_port(bandwidth: Bandwidth, rtt: SimTime, mtu_bytes: u64) -> u64 {
    bandwidth.bytes_in(rtt) + mtu_bytes
}

/// Worst case: every port reserves full headroom for every class.
pub fn switch_headroom(per_port_bytes: u64, shape: &FabricShape) -> u64 {
    per_port_bytes * shape.ports_per_switch as u64 * shape.priority_classes as u64
}

/// Bytes in flight over one round trip.
pub fn bdp(bandwidth: Bandwidth, rtt: SimTime) -> u64 {
    bandwidth.bytes_in(rtt)
}
