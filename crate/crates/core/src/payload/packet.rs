//! Ethernet / IP / transport header stripping.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};

use super::pcap::RawPacket;
use super::Payload;
use crate::error::{Error, Result};

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETH_HEADER_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl Default for FlowKey {
    fn default() -> Self {
        FlowKey {
            src_ip: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            dst_ip: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            src_port: 0,
            dst_port: 0,
            protocol: 0,
        }
    }
}

/// Why a packet produced no payload vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    /// Non-IP ethertype, IP fragment, or a transport other than TCP/UDP.
    Unsupported,
    /// Well-formed packet with zero transport payload.
    Empty,
}

/// Result of stripping one packet: the standardized payload or the reason
/// it was skipped. Header inconsistencies are errors, not skips.
pub type Extracted = std::result::Result<(Payload, FlowKey), Skip>;

pub fn extract_payload(pkt: &RawPacket) -> Result<Extracted> {
    let b = &pkt.link_bytes[..(pkt.caplen as usize).min(pkt.link_bytes.len())];
    if b.len() < ETH_HEADER_LEN {
        return Err(Error::Parse(format!("{}-byte frame shorter than Ethernet header", b.len())));
    }
    let mut ethertype = u16::from_be_bytes([b[12], b[13]]);
    let mut off = ETH_HEADER_LEN;
    if ethertype == ETHERTYPE_VLAN {
        need(b, off + 4, "VLAN tag")?;
        ethertype = u16::from_be_bytes([b[off + 2], b[off + 3]]);
        off += 4;
    }
    let (src_ip, dst_ip, protocol, l4) = match ethertype {
        ETHERTYPE_IPV4 => match ipv4(&b[off..])? {
            Some(v) => v,
            None => return Ok(Err(Skip::Unsupported)),
        },
        ETHERTYPE_IPV6 => match ipv6(&b[off..])? {
            Some(v) => v,
            None => return Ok(Err(Skip::Unsupported)),
        },
        _ => return Ok(Err(Skip::Unsupported)),
    };
    let (src_port, dst_port, data) = match protocol {
        PROTO_TCP => {
            need(l4, 20, "TCP header")?;
            let data_off = ((l4[12] >> 4) as usize) * 4;
            if data_off < 20 {
                return Err(Error::Parse(format!("TCP data offset {data_off} below 20")));
            }
            need(l4, data_off, "TCP options")?;
            (port(l4, 0), port(l4, 2), &l4[data_off..])
        }
        PROTO_UDP => {
            need(l4, 8, "UDP header")?;
            let len = u16::from_be_bytes([l4[4], l4[5]]) as usize;
            if len < 8 {
                return Err(Error::Parse(format!("UDP length {len} below header size")));
            }
            // Snaplen-truncated captures keep what was recorded.
            let end = len.min(l4.len());
            (port(l4, 0), port(l4, 2), &l4[8..end])
        }
        _ => return Ok(Err(Skip::Unsupported)),
    };
    if data.is_empty() {
        return Ok(Err(Skip::Empty));
    }
    let flow = FlowKey {
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        protocol,
    };
    Ok(Ok((Payload::from_slice(data), flow)))
}

type L3<'a> = (IpAddr, IpAddr, u8, &'a [u8]);

fn ipv4(b: &[u8]) -> Result<Option<L3<'_>>> {
    need(b, 20, "IPv4 header")?;
    if b[0] >> 4 != 4 {
        return Err(Error::Parse(format!("IPv4 ethertype with version {}", b[0] >> 4)));
    }
    let ihl = ((b[0] & 0x0F) as usize) * 4;
    let total = u16::from_be_bytes([b[2], b[3]]) as usize;
    if ihl < 20 || total < ihl {
        return Err(Error::Parse(format!("IPv4 header length {ihl} / total length {total}")));
    }
    need(b, ihl, "IPv4 options")?;
    let frag_offset = u16::from_be_bytes([b[6], b[7]]) & 0x1FFF;
    let more_fragments = b[6] & 0x20 != 0;
    if frag_offset != 0 || more_fragments {
        return Ok(None);
    }
    let src = Ipv4Addr::new(b[12], b[13], b[14], b[15]);
    let dst = Ipv4Addr::new(b[16], b[17], b[18], b[19]);
    // total bounds away Ethernet trailer padding
    let end = total.min(b.len());
    Ok(Some((src.into(), dst.into(), b[9], &b[ihl..end])))
}

fn ipv6(b: &[u8]) -> Result<Option<L3<'_>>> {
    need(b, 40, "IPv6 header")?;
    if b[0] >> 4 != 6 {
        return Err(Error::Parse(format!("IPv6 ethertype with version {}", b[0] >> 4)));
    }
    let payload_len = u16::from_be_bytes([b[4], b[5]]) as usize;
    let src = Ipv6Addr::from(<[u8; 16]>::try_from(&b[8..24]).unwrap());
    let dst = Ipv6Addr::from(<[u8; 16]>::try_from(&b[24..40]).unwrap());
    let end = (40 + payload_len).min(b.len());
    let mut next = b[6];
    let mut off = 40;
    loop {
        match next {
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                need(&b[..end], off + 8, "IPv6 extension header")?;
                let len = (b[off + 1] as usize + 1) * 8;
                need(&b[..end], off + len, "IPv6 extension header")?;
                next = b[off];
                off += len;
            }
            44 => return Ok(None),
            _ => break,
        }
    }
    Ok(Some((src.into(), dst.into(), next, &b[off..end])))
}

fn need(b: &[u8], n: usize, what: &str) -> Result<()> {
    if b.len() < n {
        return Err(Error::Parse(format!("{what} needs {n} bytes, {} captured", b.len())));
    }
    Ok(())
}

fn port(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Builds an Ethernet II / IPv4 frame carrying `payload` over TCP or UDP.
/// Checksums are left zero.
pub fn build_ipv4_frame(flow: &FlowKey, payload: &[u8]) -> Vec<u8> {
    let (src, dst) = match (flow.src_ip, flow.dst_ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => (s, d),
        _ => panic!("build_ipv4_frame needs IPv4 addresses"),
    };
    let l4_header_len = if flow.protocol == PROTO_TCP { 20 } else { 8 };
    let total = 20 + l4_header_len + payload.len();
    let mut f = Vec::with_capacity(ETH_HEADER_LEN + total);
    f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01, 0x02, 0, 0, 0, 0, 0x02]);
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    f.push(0x45);
    f.push(0);
    f.extend_from_slice(&(total as u16).to_be_bytes());
    f.extend_from_slice(&[0, 0, 0x40, 0, 64, flow.protocol, 0, 0]);
    f.extend_from_slice(&src.octets());
    f.extend_from_slice(&dst.octets());
    f.extend_from_slice(&flow.src_port.to_be_bytes());
    f.extend_from_slice(&flow.dst_port.to_be_bytes());
    if flow.protocol == PROTO_TCP {
        f.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x18, 0xFF, 0xFF, 0, 0, 0, 0]);
    } else {
        f.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        f.extend_from_slice(&[0, 0]);
    }
    f.extend_from_slice(payload);
    f
}
