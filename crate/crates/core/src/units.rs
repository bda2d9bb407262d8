//! Integer time and bandwidth units shared by the analytic models and the simulator.
//!
//! Time is carried as whole picoseconds so that analytic round-trip sums and the
//! event clock never drift apart. Bandwidth is whole bits per second.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

const PS_PER_NS: u64 = 1_000;
const PS_PER_US: u64 = 1_000_000;
const PS_PER_S: u128 = 1_000_000_000_000;

/// A point or span of simulated time in picoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    /// Rounds to the nearest picosecond.
    pub fn from_ns_f64(ns: f64) -> Self {
        SimTime((ns * PS_PER_NS as f64).round().max(0.0) as u64)
    }

    pub fn from_us_f64(us: f64) -> Self {
        SimTime((us * PS_PER_US as f64).round().max(0.0) as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 / PS_PER_NS as f64
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / PS_PER_US as f64
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }

    /// Whole nanoseconds, truncated.
    pub const fn as_ns(self) -> u64 {
        self.0 / PS_PER_NS
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0.saturating_mul(rhs))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.as_ns_f64())
    }
}

/// Link bandwidth in bits per second.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bandwidth(pub u64);

impl Bandwidth {
    pub const fn from_bps(bps: u64) -> Self {
        Bandwidth(bps)
    }

    pub const fn from_gbps(gbps: u64) -> Self {
        Bandwidth(gbps * 1_000_000_000)
    }

    pub fn from_gbps_f64(gbps: f64) -> Self {
        Bandwidth((gbps * 1e9).round().max(0.0) as u64)
    }

    pub const fn bps(self) -> u64 {
        self.0
    }

    pub fn as_gbps_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Time to clock `bytes` onto the wire, rounded up to the next picosecond.
    pub fn serialization(self, bytes: u64) -> SimTime {
        assert!(self.0 > 0, "serialization on a zero-bandwidth link");
        let bits = bytes as u128 * 8 * PS_PER_S;
        SimTime(bits.div_ceil(self.0 as u128) as u64)
    }

    /// Bytes carried in `span`, rounded up to the next whole byte.
    pub fn bytes_in(self, span: SimTime) -> u64 {
        let bits_scaled = self.0 as u128 * span.0 as u128;
        bits_scaled.div_ceil(8 * PS_PER_S) as u64
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Gb/s", self.as_gbps_f64())
    }
}
