//! Packet captures in, labeled 1500-byte payload vectors out.

mod dataset;
mod label;
pub mod packet;
pub mod pcap;

use std::io::Read;

pub use dataset::{resample, PayloadDataset, ResamplePlan};
pub use label::{label_packets, LabelRule, LabelTable, BENIGN};
pub use packet::{build_ipv4_frame, extract_payload, FlowKey, Skip, PROTO_TCP, PROTO_UDP};
pub use pcap::{parse_pcap, write_pcap, PcapReader, RawPacket};

use crate::error::Result;
use crate::PAYLOAD_LEN;

/// Exactly [`PAYLOAD_LEN`] bytes: a transport payload right-padded with
/// zeros or truncated.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Payload(Box<[u8; PAYLOAD_LEN]>);

impl Payload {
    pub fn zeroed() -> Self {
        Payload(Box::new([0u8; PAYLOAD_LEN]))
    }

    pub fn from_slice(data: &[u8]) -> Self {
        let mut p = Self::zeroed();
        let n = data.len().min(PAYLOAD_LEN);
        p.0[..n].copy_from_slice(&data[..n]);
        p
    }

    pub fn as_bytes(&self) -> &[u8; PAYLOAD_LEN] {
        &self.0
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8; PAYLOAD_LEN] {
        &mut self.0
    }
}

impl std::fmt::Debug for Payload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let used = self.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        write!(f, "Payload({used} significant bytes)")
    }
}

/// Interned class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPayload {
    pub bytes: Payload,
    pub label: LabelId,
    pub flow: FlowKey,
}

/// Payload bytes scaled into [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

pub fn normalize(payload: &LabeledPayload) -> FeatureVector {
    FeatureVector(payload.bytes.as_bytes().iter().map(|&b| b as f64 / 255.0).collect())
}

/// Counters from a capture pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractStats {
    pub packets: usize,
    pub emitted: usize,
    pub empty: usize,
    pub unsupported: usize,
}

/// Parses a capture and strips every packet, keeping payload-bearing ones.
/// A packet with inconsistent headers aborts the pass.
pub fn extract_capture<R: Read>(stream: R) -> Result<(Vec<(Payload, FlowKey)>, ExtractStats)> {
    let mut out = Vec::new();
    let mut stats = ExtractStats::default();
    for pkt in PcapReader::new(stream)? {
        let pkt = pkt?;
        stats.packets += 1;
        match extract_payload(&pkt)? {
            Ok(v) => {
                stats.emitted += 1;
                out.push(v);
            }
            Err(Skip::Empty) => stats.empty += 1,
            Err(Skip::Unsupported) => stats.unsupported += 1,
        }
    }
    Ok((out, stats))
}
