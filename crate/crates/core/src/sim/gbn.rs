//! Go-back-n: the receiver keeps only the next expected sequence and
//! NACKs the first gap; the sender rewinds to the NACKed sequence.

use crate::units::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbnReceive {
    Deliver { next_expected: u64 },
    DiscardAndNack { expected: u64 },
    DiscardDuplicate,
}

pub fn gbn_on_receive(expected: u64, seq: u64) -> GbnReceive {
    use std::cmp::Ordering::*;
    match seq.cmp(&expected) {
        Equal => GbnReceive::Deliver {
            next_expected: expected + 1,
        },
        Greater => GbnReceive::DiscardAndNack { expected },
        Less => GbnReceive::DiscardDuplicate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NackOutcome {
    /// Below the cumulative ack, or from an earlier rewind epoch.
    Stale,
    /// Within one RTT of the previous rewind.
    Suppressed,
    /// Sequences `from..high_sent` re-enter the send queue.
    Rewound { from: u64, high_sent: u64 },
}

#[derive(Debug, Clone)]
pub struct GbnSender {
    total: u64,
    next_seq: u64,
    high_sent: u64,
    acked: u64,
    epoch: u32,
    last_rewind: Option<SimTime>,
    guard: SimTime,
}

impl GbnSender {
    /// `guard` is the minimum spacing between two NACK-driven rewinds.
    pub fn new(total_packets: u64, guard: SimTime) -> Self {
        GbnSender {
            total: total_packets,
            next_seq: 0,
            high_sent: 0,
            acked: 0,
            epoch: 0,
            last_rewind: None,
            guard,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// One past the highest sequence ever sent.
    pub fn high_sent(&self) -> u64 {
        self.high_sent
    }

    pub fn acked(&self) -> u64 {
        self.acked
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn done(&self) -> bool {
        self.acked >= self.total
    }

    /// Sequences sent in the current pass and not yet acknowledged.
    pub fn outstanding(&self) -> u64 {
        self.next_seq.saturating_sub(self.acked)
    }

    /// Cumulative ack: every sequence below `next_expected` arrived. Returns whether it advanced.
    pub fn on_ack(&mut self, next_expected: u64) -> bool {
        if next_expected <= self.acked {
            return false;
        }
        self.acked = next_expected.min(self.total);
        if self.next_seq < self.acked {
            self.next_seq = self.acked;
        }
        true
    }

    pub fn on_nack(&mut self, nack_seq: u64, epoch: u32, now: SimTime) -> NackOutcome {
        if nack_seq < self.acked || nack_seq >= self.high_sent {
            return NackOutcome::Stale;
        }
        if let Some(t) = self.last_rewind {
            if now < t + self.guard {
                return NackOutcome::Suppressed;
            }
        }
        if epoch != self.epoch {
            return NackOutcome::Stale;
        }
        // the NACK also acknowledges everything before the gap
        self.acked = nack_seq;
        self.rewind_to(nack_seq, now);
        NackOutcome::Rewound {
            from: nack_seq,
            high_sent: self.high_sent,
        }
    }

    /// Retransmission timer: resend everything unacknowledged.
    pub fn on_timeout(&mut self, now: SimTime) -> Option<u64> {
        if self.done() || self.high_sent == self.acked {
            return None;
        }
        let from = self.acked;
        self.rewind_to(from, now);
        Some(from)
    }

    fn rewind_to(&mut self, seq: u64, now: SimTime) {
        self.next_seq = seq;
        self.epoch += 1;
        self.last_rewind = Some(now);
    }

    pub fn next_to_send(&self) -> Option<u64> {
        (self.next_seq < self.total).then_some(self.next_seq)
    }

    /// Returns true when the sequence had been sent before.
    pub fn mark_sent(&mut self, seq: u64) -> bool {
        debug_assert_eq!(seq, self.next_seq);
        let resend = seq < self.high_sent;
        self.next_seq = seq + 1;
        self.high_sent = self.high_sent.max(self.next_seq);
        resend
    }
}
