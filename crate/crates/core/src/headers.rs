//! Per-packet header budgets and the packet rates they allow.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderLayer {
    pub name: String,
    pub bytes: u64,
}

/// Ordered header layers of one packet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderStack {
    pub layers: Vec<HeaderLayer>,
}

/// Preamble + start delimiter (8 B) and the minimum inter-packet gap (12 B).
const PHY_OVERHEAD: [(&str, u64); 2] = [("preamble", 8), ("ipg", 12)];

impl HeaderStack {
    pub fn new<I, S>(layers: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        HeaderStack {
            layers: layers
                .into_iter()
                .map(|(name, bytes)| HeaderLayer {
                    name: name.into(),
                    bytes,
                })
                .collect(),
        }
    }

    /// RoCEv2: Ethernet L2, IPv4, UDP, BTH and ICRC.
    pub fn rocev2() -> Self {
        HeaderStack::new([("l2", 22), ("ipv4", 20), ("udp", 8), ("bth", 12), ("icrc", 4)])
    }

    /// Locally routed InfiniBand: LRH and BTH.
    pub fn ib_local() -> Self {
        HeaderStack::new([("lrh", 8), ("bth", 12)])
    }

    /// Parses `name:bytes,name:bytes,...`. An empty string yields an empty stack.
    pub fn parse_layers(s: &str) -> Result<Self, ModelError> {
        let mut layers = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (name, bytes) = item
                .split_once(':')
                .ok_or_else(|| ModelError::Parse(format!("header layer '{item}' is not name:bytes")))?;
            let bytes = bytes
                .trim()
                .parse::<u64>()
                .map_err(|_| ModelError::Parse(format!("header layer '{item}' has a non-integer size")))?;
            layers.push(HeaderLayer {
                name: name.trim().to_string(),
                bytes,
            });
        }
        Ok(HeaderStack { layers })
    }

    /// Adds Ethernet preamble and inter-packet gap as pseudo-layers.
    pub fn with_phy_overhead(mut self) -> Self {
        for (name, bytes) in PHY_OVERHEAD {
            self.layers.push(HeaderLayer {
                name: name.to_string(),
                bytes,
            });
        }
        self
    }

    pub fn total_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.bytes).sum()
    }
}

/// Built-in header profiles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderProfile {
    #[default]
    Rocev2,
    IbLocal,
}

impl HeaderProfile {
    pub fn stack(self) -> HeaderStack {
        match self {
            HeaderProfile::Rocev2 => HeaderStack::rocev2(),
            HeaderProfile::IbLocal => HeaderStack::ib_local(),
        }
    }
}

impl fmt::Display for HeaderProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeaderProfile::Rocev2 => "rocev2",
            HeaderProfile::IbLocal => "ib_local",
        })
    }
}

impl FromStr for HeaderProfile {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rocev2" => Ok(HeaderProfile::Rocev2),
            "ib_local" => Ok(HeaderProfile::IbLocal),
            other => Err(ModelError::Parse(format!("unknown header profile '{other}'"))),
        }
    }
}

pub fn header_bytes(stack: &HeaderStack) -> u64 {
    stack.total_bytes()
}

/// Packets per second a link of `bandwidth_bps` carries at the given packet size.
pub fn packet_rate(bandwidth_bps: f64, payload_bytes: u64, header_bytes: u64) -> Result<f64, ModelError> {
    check_nonnegative("bandwidth", bandwidth_bps)?;
    let size = payload_bytes + header_bytes;
    if size == 0 {
        return Err(ModelError::EmptyPacket);
    }
    Ok(bandwidth_bps / (8.0 * size as f64))
}

/// Share of the wire carrying payload.
pub fn wire_efficiency(payload_bytes: u64, header_bytes: u64) -> Result<f64, ModelError> {
    let size = payload_bytes + header_bytes;
    if size == 0 {
        return Err(ModelError::EmptyPacket);
    }
    Ok(payload_bytes as f64 / size as f64)
}

/// Rounds to `digits` significant figures for human-readable output.
pub fn round_significant(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - magnitude);
    (x * scale).round() / scale
}
