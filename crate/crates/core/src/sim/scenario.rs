//! Scenario files: TOML documents describing one simulation run.

use serde::{Deserialize, Serialize};

use super::cc::{CcMode, CcParams};
use super::routing::{PolicyKind, RoutePolicy};
use super::SimError;
use crate::fec::{CodewordBasis, ErrorQuery, FecScheme};
use crate::headers::HeaderProfile;
use crate::link_budget::{bdp, headroom_per_port, link_rtt, LinkGeometry};
use crate::traffic::Motif;
use crate::units::{Bandwidth, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// A byte count or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizing {
    Bytes(u64),
    Auto(AutoKeyword),
}

impl Default for Sizing {
    fn default() -> Self {
        Sizing::Auto(AutoKeyword::Auto)
    }
}

impl Sizing {
    pub fn resolve(self, auto: u64) -> u64 {
        match self {
            Sizing::Bytes(b) => b,
            Sizing::Auto(_) => auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub tiers: u32,
    pub radix: u32,
    pub bandwidth_gbps: f64,
    pub per_hop_ns: f64,
    pub cable_m: f64,
    pub wire_delay_ns_per_m: f64,
    pub mtu_bytes: u64,
    pub header_profile: HeaderProfile,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            tiers: 3,
            radix: 4,
            bandwidth_gbps: 800.0,
            per_hop_ns: 600.0,
            cable_m: 0.0,
            wire_delay_ns_per_m: 5.0,
            mtu_bytes: 9216,
            header_profile: HeaderProfile::Rocev2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    #[default]
    GoBackN,
    Selective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcConfig {
    pub enabled: bool,
    pub decrease_factor: f64,
    pub increase_period_us: f64,
    pub increase_step_gbps: f64,
    pub min_rate_gbps: f64,
    pub mode: CcMode,
}

impl Default for CcConfig {
    fn default() -> Self {
        CcConfig {
            enabled: true,
            decrease_factor: 0.5,
            increase_period_us: 5.0,
            increase_step_gbps: 40.0,
            min_rate_gbps: 1.0,
            mode: CcMode::Rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub mode: TransportMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_bytes: Option<u64>,
    pub timeout_us: f64,
    /// Later packets acknowledged before a selective hole counts as lost.
    pub dupthresh: u64,
    pub reorder_buffer_packets: usize,
    pub cc: CcConfig,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: TransportMode::GoBackN,
            window_bytes: None,
            timeout_us: 100.0,
            dupthresh: 3,
            reorder_buffer_packets: 1 << 16,
            cc: CcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PfcConfig {
    pub enabled: bool,
    /// Classes that carry data; traffic classes must be below this.
    pub classes: u32,
    pub headroom_bytes: Sizing,
    /// Per-class occupancy at which PAUSE is sent.
    pub xoff_bytes: u64,
}

impl Default for PfcConfig {
    fn default() -> Self {
        PfcConfig {
            enabled: true,
            classes: 8,
            headroom_bytes: Sizing::default(),
            xoff_bytes: 131_072,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcnConfig {
    pub enabled: bool,
    pub threshold_bytes: Sizing,
}

impl Default for EcnConfig {
    fn default() -> Self {
        EcnConfig {
            enabled: true,
            threshold_bytes: Sizing::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    pub policy: PolicyKind,
    pub flowlet_gap_us: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            policy: PolicyKind::Ecmp,
            flowlet_gap_us: 2.0,
        }
    }
}

/// Seeded per-packet drops on one directed link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_probability: Option<f64>,
    /// Alternative to `drop_probability`: bit error rate converted at MTU-sized frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ber: Option<f64>,
    /// FEC scheme applied before the CRC when converting `ber`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fec: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// The egress from `from` toward `to` is paused for `class` and never resumed.
    StuckPause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub kind: FaultKind,
    pub from: String,
    pub to: String,
    pub class: u8,
    #[serde(default)]
    pub at_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon_us: f64,
    #[serde(default = "default_watchdog")]
    pub watchdog_us: f64,
    /// Port sampling period; 0 samples only at the end of the run.
    #[serde(default = "default_sample")]
    pub sample_interval_us: f64,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub pfc: PfcConfig,
    #[serde(default)]
    pub ecn: EcnConfig,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss: Vec<LossConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultConfig>,
    #[serde(default)]
    pub traffic: Vec<Motif>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_horizon() -> f64 {
    100_000.0
}

fn default_watchdog() -> f64 {
    1000.0
}

fn default_sample() -> f64 {
    1.0
}

fn config(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

fn duration(name: &str, us: f64) -> Result<SimTime, SimError> {
    if us.is_finite() && us >= 0.0 {
        Ok(SimTime::from_us_f64(us))
    } else {
        Err(config(format!(
            "{name} must be a finite non-negative number of microseconds, got {us}"
        )))
    }
}

fn positive(name: &str, v: f64) -> Result<f64, SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config(format!("{name} must be positive, got {v}")))
    }
}

/// Scenario values converted to simulator units and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub geometry: LinkGeometry,
    pub header_bytes: u64,
    pub max_payload: u64,
    pub horizon: SimTime,
    pub watchdog: SimTime,
    pub sample_interval: SimTime,
    pub timeout: SimTime,
    pub cc: Option<CcParams>,
    pub headroom_bytes: u64,
    pub ecn_threshold: Option<u64>,
    pub route_policy: RoutePolicy,
    pub loss_probabilities: Vec<f64>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn geometry(&self) -> Result<LinkGeometry, SimError> {
        let t = &self.topology;
        let g = LinkGeometry {
            bandwidth: Bandwidth::from_gbps_f64(positive("topology.bandwidth_gbps", t.bandwidth_gbps)?),
            cable_length_m: t.cable_m,
            wire_delay_ns_per_m: t.wire_delay_ns_per_m,
            per_hop_latency: SimTime::from_ns_f64(if t.per_hop_ns.is_finite() && t.per_hop_ns >= 0.0 {
                t.per_hop_ns
            } else {
                return Err(config("topology.per_hop_ns must be non-negative"));
            }),
            mtu_bytes: t.mtu_bytes,
        };
        g.validate().map_err(|e| config(e.to_string()))?;
        Ok(g)
    }

    /// Headroom a port needs to stay lossless: one link round trip at line rate plus an MTU.
    pub fn auto_headroom(geometry: &LinkGeometry) -> u64 {
        headroom_per_port(geometry.bandwidth, link_rtt(geometry), geometry.mtu_bytes)
    }

    /// Default marking threshold: half a link bandwidth-delay product.
    pub fn auto_ecn_threshold(geometry: &LinkGeometry) -> u64 {
        bdp(geometry.bandwidth, link_rtt(geometry)) / 2
    }

    pub fn resolve(&self) -> Result<Resolved, SimError> {
        let geometry = self.geometry()?;
        let header_bytes = self.topology.header_profile.stack().total_bytes();
        if self.topology.mtu_bytes <= header_bytes {
            return Err(config(format!(
                "topology.mtu_bytes ({}) must exceed the {header_bytes}-byte header",
                self.topology.mtu_bytes
            )));
        }
        let tr = &self.transport;
        let timeout = duration("transport.timeout_us", tr.timeout_us)?;
        if tr.mode == TransportMode::Selective && timeout == SimTime::ZERO {
            return Err(config(
                "selective transport needs transport.timeout_us > 0 for tail-loss recovery",
            ));
        }
        if tr.window_bytes == Some(0) {
            return Err(config("transport.window_bytes must be positive"));
        }
        let cc = if tr.cc.enabled {
            let c = &tr.cc;
            if !(c.decrease_factor > 0.0 && c.decrease_factor < 1.0) {
                return Err(config(format!(
                    "transport.cc.decrease_factor must be in (0, 1), got {}",
                    c.decrease_factor
                )));
            }
            let period = duration("transport.cc.increase_period_us", c.increase_period_us)?;
            if period == SimTime::ZERO {
                return Err(config("transport.cc.increase_period_us must be positive"));
            }
            Some(CcParams {
                decrease_factor: c.decrease_factor,
                increase_period: period,
                increase_step: Bandwidth::from_gbps_f64(positive(
                    "transport.cc.increase_step_gbps",
                    c.increase_step_gbps,
                )?),
                min_rate: Bandwidth::from_gbps_f64(positive("transport.cc.min_rate_gbps", c.min_rate_gbps)?),
                mode: c.mode,
            })
        } else {
            None
        };
        if !(1..=8).contains(&self.pfc.classes) {
            return Err(config(format!(
                "pfc.classes must be in [1, 8], got {}",
                self.pfc.classes
            )));
        }
        let route_policy = match self.routing.policy {
            PolicyKind::Ecmp => RoutePolicy::Ecmp,
            PolicyKind::Spray => RoutePolicy::Spray,
            PolicyKind::Flowlet => RoutePolicy::Flowlet {
                gap: duration("routing.flowlet_gap_us", self.routing.flowlet_gap_us)?,
            },
        };
        let mut loss_probabilities = Vec::with_capacity(self.loss.len());
        for l in &self.loss {
            let p = match (l.drop_probability, l.ber) {
                (Some(p), None) => p,
                (None, Some(ber)) => {
                    let scheme = match &l.fec {
                        None => None,
                        Some(name) => Some(name.parse::<FecScheme>().map_err(|e| config(e.to_string()))?),
                    };
                    let query = ErrorQuery {
                        ber_in: ber,
                        frame_bits: self.topology.mtu_bytes * 8,
                        hops: 0,
                        scheme,
                        basis: CodewordBasis::default(),
                    };
                    query.evaluate().map_err(|e| config(e.to_string()))?.loss_p
                }
                _ => {
                    return Err(config(format!(
                        "loss {} -> {}: give exactly one of drop_probability or ber",
                        l.from, l.to
                    )))
                }
            };
            if !(0.0..=1.0).contains(&p) {
                return Err(config(format!(
                    "loss {} -> {}: probability {p} outside [0, 1]",
                    l.from, l.to
                )));
            }
            loss_probabilities.push(p);
        }
        for f in &self.faults {
            if f.class >= 8 {
                return Err(config(format!("fault class {} does not fit in three bits", f.class)));
            }
            duration("faults.at_us", f.at_us)?;
        }
        let watchdog = duration("watchdog_us", self.watchdog_us)?;
        if watchdog == SimTime::ZERO {
            return Err(config("watchdog_us must be positive"));
        }
        Ok(Resolved {
            header_bytes,
            max_payload: self.topology.mtu_bytes - header_bytes,
            horizon: duration("horizon_us", self.horizon_us)?,
            watchdog,
            sample_interval: duration("sample_interval_us", self.sample_interval_us)?,
            timeout,
            cc,
            headroom_bytes: self.pfc.headroom_bytes.resolve(Self::auto_headroom(&geometry)),
            ecn_threshold: self
                .ecn
                .enabled
                .then(|| self.ecn.threshold_bytes.resolve(Self::auto_ecn_threshold(&geometry))),
            route_policy,
            loss_probabilities,
            geometry,
        })
    }
}
