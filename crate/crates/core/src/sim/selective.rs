//! Selective retransmission with range acknowledgments.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckRecord {
    /// Every sequence below this arrived.
    pub next_expected: u64,
    /// Received runs above `next_expected`, inclusive, ascending.
    pub ranges: Vec<(u64, u64)>,
}

impl AckRecord {
    /// Highest in-order sequence received, if any.
    pub fn cumulative(&self, first_seq: u64) -> Option<u64> {
        (self.next_expected > first_seq).then(|| self.next_expected - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("reorder buffer full ({capacity} packets)")]
pub struct ReorderOverflow {
    pub capacity: usize,
}

#[derive(Debug, Clone)]
pub struct SackReceiver {
    first_seq: u64,
    next_expected: u64,
    buffered: BTreeSet<u64>,
    capacity: usize,
}

impl SackReceiver {
    pub fn new(capacity: usize) -> Self {
        Self::starting_at(0, capacity)
    }

    pub fn starting_at(first_seq: u64, capacity: usize) -> Self {
        SackReceiver {
            first_seq,
            next_expected: first_seq,
            buffered: BTreeSet::new(),
            capacity,
        }
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    pub fn first_seq(&self) -> u64 {
        self.first_seq
    }

    pub fn buffered(&self) -> usize {
        self.buffered.len()
    }

    /// Accepts one data packet. Returns the ack to send and how many
    /// packets became deliverable in order.
    pub fn sack_update(&mut self, seq: u64) -> Result<(AckRecord, u64), ReorderOverflow> {
        let before = self.next_expected;
        if seq == self.next_expected {
            self.next_expected += 1;
            while self.buffered.remove(&self.next_expected) {
                self.next_expected += 1;
            }
        } else if seq > self.next_expected && !self.buffered.contains(&seq) {
            if self.buffered.len() >= self.capacity {
                return Err(ReorderOverflow {
                    capacity: self.capacity,
                });
            }
            self.buffered.insert(seq);
        }
        Ok((self.record(), self.next_expected - before))
    }

    pub fn record(&self) -> AckRecord {
        let mut ranges: Vec<(u64, u64)> = Vec::new();
        for &s in &self.buffered {
            match ranges.last_mut() {
                Some(r) if r.1 + 1 == s => r.1 = s,
                _ => ranges.push((s, s)),
            }
        }
        AckRecord {
            next_expected: self.next_expected,
            ranges,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectiveSender {
    total: u64,
    next_new: u64,
    cum: u64,
    sacked: Vec<bool>,
    sacked_above_cum: u64,
    queued: Vec<bool>,
    retx_queue: VecDeque<u64>,
    highest_sacked: Option<u64>,
    /// Sequences below this were already considered for loss marking.
    scan_from: u64,
    dupthresh: u64,
}

impl SelectiveSender {
    pub fn new(total_packets: u64, dupthresh: u64) -> Self {
        let n = total_packets as usize;
        SelectiveSender {
            total: total_packets,
            next_new: 0,
            cum: 0,
            sacked: vec![false; n],
            sacked_above_cum: 0,
            queued: vec![false; n],
            retx_queue: VecDeque::new(),
            highest_sacked: None,
            scan_from: 0,
            dupthresh: dupthresh.max(1),
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cumulative(&self) -> u64 {
        self.cum
    }

    pub fn high_sent(&self) -> u64 {
        self.next_new
    }

    pub fn done(&self) -> bool {
        self.cum >= self.total
    }

    /// Sent, not cumulatively acked and not selectively acked.
    pub fn outstanding(&self) -> u64 {
        self.next_new - self.cum - self.sacked_above_cum
    }

    pub fn retx_pending(&self) -> usize {
        self.retx_queue.len()
    }

    fn set_sacked(&mut self, seq: u64) -> bool {
        let i = seq as usize;
        if seq >= self.cum && seq < self.next_new && !self.sacked[i] {
            self.sacked[i] = true;
            self.sacked_above_cum += 1;
            return true;
        }
        false
    }

    /// Applies an ack. Returns whether it acknowledged anything new.
    pub fn on_ack(&mut self, ack: &AckRecord) -> bool {
        let mut progress = false;
        let target = ack.next_expected.min(self.next_new);
        while self.cum < target {
            if self.sacked[self.cum as usize] {
                self.sacked_above_cum -= 1;
            } else {
                self.sacked[self.cum as usize] = true;
            }
            self.cum += 1;
            progress = true;
        }
        for &(lo, hi) in &ack.ranges {
            for seq in lo.max(self.cum)..=hi.min(self.next_new.saturating_sub(1)) {
                progress |= self.set_sacked(seq);
            }
            if hi < self.next_new {
                self.highest_sacked = Some(self.highest_sacked.map_or(hi, |h| h.max(hi)));
            }
        }
        self.mark_losses();
        progress
    }

    /// A hole is lost once `dupthresh` later sequences were acknowledged.
    fn mark_losses(&mut self) {
        let Some(high) = self.highest_sacked else { return };
        self.scan_from = self.scan_from.max(self.cum);
        if high < self.dupthresh {
            return;
        }
        let limit = high + 1 - self.dupthresh;
        while self.scan_from < limit {
            let s = self.scan_from;
            if !self.sacked[s as usize] && !self.queued[s as usize] {
                self.queued[s as usize] = true;
                self.retx_queue.push_back(s);
            }
            self.scan_from += 1;
        }
    }

    /// Re-queues every unacknowledged sequence; returns how many were queued.
    pub fn on_timeout(&mut self) -> u64 {
        let mut n = 0;
        for s in self.cum..self.next_new {
            if !self.sacked[s as usize] && !self.queued[s as usize] {
                self.queued[s as usize] = true;
                self.retx_queue.push_back(s);
                n += 1;
            }
        }
        n
    }

    pub fn next_to_send(&mut self) -> Option<u64> {
        while let Some(&s) = self.retx_queue.front() {
            if s >= self.cum && !self.sacked[s as usize] {
                return Some(s);
            }
            self.retx_queue.pop_front();
            self.queued[s as usize] = false;
        }
        (self.next_new < self.total).then_some(self.next_new)
    }

    /// Returns true when the sequence had been sent before.
    pub fn mark_sent(&mut self, seq: u64) -> bool {
        if self.retx_queue.front() == Some(&seq) {
            self.retx_queue.pop_front();
            self.queued[seq as usize] = false;
            true
        } else {
            debug_assert_eq!(seq, self.next_new);
            self.next_new += 1;
            false
        }
    }
}
