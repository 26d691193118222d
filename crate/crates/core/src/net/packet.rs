use std::fmt;
use std::net::Ipv4Addr;

use crate::des::SimTime;

/// Fixed per-packet overhead standing in for TCP/IP headers.
pub const HEADER_BYTES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub u64);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    DataSample,
    DataRequest,
    ModelResult,
    Control,
}

impl PacketKind {
    pub const ALL: [PacketKind; 4] = [
        PacketKind::DataSample,
        PacketKind::DataRequest,
        PacketKind::ModelResult,
        PacketKind::Control,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::DataSample => "DATA_SAMPLE",
            PacketKind::DataRequest => "DATA_REQUEST",
            PacketKind::ModelResult => "MODEL_RESULT",
            PacketKind::Control => "CONTROL",
        }
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub kind: PacketKind,
    pub payload: Vec<u8>,
    pub sent_at: SimTime,
}

impl Packet {
    /// On-wire size: payload plus the fixed header.
    pub fn size_bytes(&self) -> usize {
        self.payload.len() + HEADER_BYTES
    }
}
