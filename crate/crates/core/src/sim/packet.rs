use crate::units::SimTime;

pub type FlowId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Data,
    Ack,
    Nack,
    Cnp,
    Pause,
    Resume,
}

impl PacketKind {
    pub fn is_control(self) -> bool {
        !matches!(self, PacketKind::Data)
    }
}

/// Control packets carry no payload; this is their wire size.
pub const CONTROL_BYTES: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    /// Data: sequence number. Ack: cumulative next-expected. Nack: expected sequence.
    pub seq: u64,
    pub payload_bytes: u64,
    pub header_bytes: u64,
    pub class: u8,
    pub ecn_marked: bool,
    pub kind: PacketKind,
    /// Sender rewind epoch, echoed by go-back-n NACKs.
    pub epoch: u32,
    /// Selective acknowledgment ranges, inclusive, above the cumulative point.
    pub sack: Vec<(u64, u64)>,
    /// Host numbers.
    pub src: usize,
    pub dst: usize,
    pub sent_at: SimTime,
    /// Transmission attempt of this sequence number, 0 for the first send.
    pub attempt: u32,
}

impl Packet {
    pub fn data(
        flow: FlowId,
        seq: u64,
        payload_bytes: u64,
        header_bytes: u64,
        class: u8,
        src: usize,
        dst: usize,
    ) -> Self {
        debug_assert!(class < 8);
        Packet {
            flow,
            seq,
            payload_bytes,
            header_bytes,
            class,
            ecn_marked: false,
            kind: PacketKind::Data,
            epoch: 0,
            sack: Vec::new(),
            src,
            dst,
            sent_at: SimTime::ZERO,
            attempt: 0,
        }
    }

    pub fn control(kind: PacketKind, flow: FlowId, seq: u64, class: u8, src: usize, dst: usize) -> Self {
        Packet {
            flow,
            seq,
            payload_bytes: 0,
            header_bytes: CONTROL_BYTES,
            class,
            ecn_marked: false,
            kind,
            epoch: 0,
            sack: Vec::new(),
            src,
            dst,
            sent_at: SimTime::ZERO,
            attempt: 0,
        }
    }

    pub fn wire_bytes(&self) -> u64 {
        self.payload_bytes + self.header_bytes
    }
}
