//! Egress choice among equal-cost ports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mix_all;
use super::packet::FlowId;
use super::topology::NodeId;
use crate::units::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutePolicy {
    Ecmp,
    Flowlet { gap: SimTime },
    Spray,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Ecmp,
    Flowlet,
    Spray,
}

#[derive(Debug, Clone, Copy, Default)]
struct FlowletState {
    last_seen: SimTime,
    flowlet: u64,
}

/// Per-switch, per-flow routing state. Flow ids must be stable for ECMP to be.
#[derive(Debug, Clone)]
pub struct RouteSelector {
    policy: RoutePolicy,
    salt: u64,
    flowlets: HashMap<(NodeId, FlowId), FlowletState>,
    spray: HashMap<(NodeId, FlowId), u64>,
}

impl RouteSelector {
    pub fn new(policy: RoutePolicy, salt: u64) -> Self {
        RouteSelector {
            policy,
            salt,
            flowlets: HashMap::new(),
            spray: HashMap::new(),
        }
    }

    fn hash_pick(&self, node: NodeId, flow: FlowId, extra: u64, n: usize) -> usize {
        (mix_all(&[self.salt, node as u64, flow as u64, extra]) % n as u64) as usize
    }

    /// Picks an index into `candidates` for a data packet of `flow` at `node`.
    pub fn select(&mut self, node: NodeId, flow: FlowId, now: SimTime, candidates: &[usize]) -> usize {
        assert!(!candidates.is_empty(), "no equal-cost egress");
        let n = candidates.len();
        if n == 1 {
            return candidates[0];
        }
        let idx = match self.policy {
            RoutePolicy::Ecmp => self.hash_pick(node, flow, 0, n),
            RoutePolicy::Flowlet { gap } => {
                let st = self.flowlets.entry((node, flow)).or_insert(FlowletState {
                    last_seen: now,
                    flowlet: 0,
                });
                if now.saturating_sub(st.last_seen) >= gap && now > st.last_seen {
                    st.flowlet += 1;
                }
                st.last_seen = now;
                let f = st.flowlet;
                self.hash_pick(node, flow, f + 1, n)
            }
            RoutePolicy::Spray => {
                let c = self.spray.entry((node, flow)).or_insert(0);
                let i = (*c % n as u64) as usize;
                *c += 1;
                // start each flow at a different port
                (i + self.hash_pick(node, flow, 0, n)) % n
            }
        };
        candidates[idx]
    }

    /// Control packets tolerate reordering; they always hash.
    pub fn select_control(&self, node: NodeId, flow: FlowId, candidates: &[usize]) -> usize {
        candidates[self.hash_pick(node, flow, u64::MAX, candidates.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PORTS: [usize; 4] = [4, 5, 6, 7];

    #[test]
    fn ecmp_is_stable_per_flow() {
        let mut r = RouteSelector::new(RoutePolicy::Ecmp, 9);
        let a = r.select(3, 42, SimTime::ZERO, &PORTS);
        for t in 0..100 {
            assert_eq!(r.select(3, 42, SimTime::from_us(t), &PORTS), a);
        }
        // flows spread over ports
        let used: std::collections::BTreeSet<_> = (0..64).map(|f| r.select(3, f, SimTime::ZERO, &PORTS)).collect();
        assert_eq!(used.len(), 4);
    }

    #[test]
    fn spray_round_robins() {
        let mut r = RouteSelector::new(RoutePolicy::Spray, 1);
        let mut counts = [0; 8];
        for _ in 0..400 {
            counts[r.select(0, 7, SimTime::ZERO, &PORTS)] += 1;
        }
        assert_eq!(&counts[4..], &[100, 100, 100, 100]);
    }

    #[test]
    fn flowlet_changes_only_after_gap() {
        let gap = SimTime::from_us(2);
        let mut r = RouteSelector::new(RoutePolicy::Flowlet { gap }, 5);
        let mut t = SimTime::ZERO;
        let first = r.select(1, 1, t, &PORTS);
        // back-to-back packets stay put
        for _ in 0..50 {
            t += SimTime::from_ns(100);
            assert_eq!(r.select(1, 1, t, &PORTS), first);
        }
        // large gaps allow a new choice; across several flowlets at least one moves
        let mut moved = false;
        for _ in 0..16 {
            t += SimTime::from_us(3);
            moved |= r.select(1, 1, t, &PORTS) != first;
        }
        assert!(moved);
    }

    #[test]
    fn single_candidate_short_circuits() {
        let mut r = RouteSelector::new(RoutePolicy::Spray, 0);
        assert_eq!(r.select(0, 0, SimTime::ZERO, &[3]), 3);
    }
}
