//! Per-ingress-port, per-class PFC accounting.
//!
//! Each class may hold `buffer_limit` bytes. The top `headroom_reserved`
//! bytes absorb what is still on the wire after a PAUSE is sent, so XOFF
//! fires once free space drops below the headroom. XON fires when
//! occupancy falls below half the XOFF level.

use thiserror::Error;

pub const CLASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfcAction {
    Pause(u8),
    Resume(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PfcFault {
    #[error("class {class} would hold {attempted} bytes, limit {limit}")]
    Overflow { class: u8, attempted: u64, limit: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortState {
    pub occupancy: [u64; CLASSES],
    /// Classes for which this port has paused its upstream peer.
    pub paused: [bool; CLASSES],
    pub buffer_limit: u64,
    pub headroom_reserved: u64,
    /// Lossy mode when false: never pauses, overflowing packets are dropped.
    pub enabled: bool,
}

impl PortState {
    pub fn new(xoff_bytes: u64, headroom_reserved: u64, enabled: bool) -> Self {
        PortState {
            occupancy: [0; CLASSES],
            paused: [false; CLASSES],
            buffer_limit: xoff_bytes + headroom_reserved,
            headroom_reserved,
            enabled,
        }
    }

    /// Occupancy above which the class is paused.
    pub fn xoff_level(&self) -> u64 {
        self.buffer_limit.saturating_sub(self.headroom_reserved)
    }

    fn should_resume(&self, class: usize) -> bool {
        let occ = self.occupancy[class];
        occ == 0 || occ < self.xoff_level() / 2
    }

    /// Applies an occupancy change. A rejected increase leaves the state untouched.
    pub fn update(&mut self, class: u8, delta: i64) -> Result<Option<PfcAction>, PfcFault> {
        let c = class as usize;
        assert!(c < CLASSES, "priority class {class} does not fit in three bits");
        let occ = self.occupancy[c];
        let next = if delta >= 0 {
            occ + delta as u64
        } else {
            occ.checked_sub(delta.unsigned_abs())
                .expect("occupancy released below zero")
        };
        if next > self.buffer_limit {
            return Err(PfcFault::Overflow {
                class,
                attempted: next,
                limit: self.buffer_limit,
            });
        }
        self.occupancy[c] = next;
        if !self.enabled {
            return Ok(None);
        }
        let free = self.buffer_limit - next;
        if !self.paused[c] && free < self.headroom_reserved {
            self.paused[c] = true;
            return Ok(Some(PfcAction::Pause(class)));
        }
        if self.paused[c] && self.should_resume(c) {
            self.paused[c] = false;
            return Ok(Some(PfcAction::Resume(class)));
        }
        Ok(None)
    }

    pub fn total_occupancy(&self) -> u64 {
        self.occupancy.iter().sum()
    }
}
