//! Classic libpcap capture files (both byte orders, Ethernet link type).

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: u32 = 0xA1B2_C3D4;
const MAGIC_SWAPPED: u32 = 0xD4C3_B2A1;
pub const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub link_bytes: Vec<u8>,
    pub caplen: u32,
    pub origlen: u32,
}

impl RawPacket {
    /// A packet captured in full.
    pub fn new(ts_sec: u32, ts_usec: u32, link_bytes: Vec<u8>) -> Self {
        let len = link_bytes.len() as u32;
        RawPacket {
            ts_sec,
            ts_usec,
            link_bytes,
            caplen: len,
            origlen: len,
        }
    }
}

/// Streaming reader over the records of a capture.
pub struct PcapReader<R> {
    inner: R,
    swapped: bool,
    index: usize,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut hdr = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut hdr)?;
        if got < 4 {
            return Err(Error::Format("capture shorter than its magic number".into()));
        }
        let magic = u32::from_le_bytes(hdr[..4].try_into().unwrap());
        let swapped = match magic {
            MAGIC => false,
            MAGIC_SWAPPED => true,
            other => return Err(Error::Format(format!("unrecognized pcap magic {other:#010x}"))),
        };
        if got < GLOBAL_HEADER_LEN {
            return Err(Error::Format("truncated pcap global header".into()));
        }
        let linktype = field(&hdr[20..24], swapped);
        if linktype != LINKTYPE_ETHERNET {
            return Err(Error::Format(format!("unsupported link type {linktype}")));
        }
        Ok(PcapReader {
            inner,
            swapped,
            index: 0,
            done: false,
        })
    }

    fn next_record(&mut self) -> Result<Option<RawPacket>> {
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        match read_full(&mut self.inner, &mut hdr)? {
            0 => return Ok(None),
            RECORD_HEADER_LEN => {}
            _ => return Err(Error::Truncated { index: self.index }),
        }
        let ts_sec = field(&hdr[0..4], self.swapped);
        let ts_usec = field(&hdr[4..8], self.swapped);
        let caplen = field(&hdr[8..12], self.swapped);
        let origlen = field(&hdr[12..16], self.swapped);
        if caplen > origlen {
            return Err(Error::Format(format!(
                "packet {}: caplen {caplen} exceeds origlen {origlen}",
                self.index
            )));
        }
        let mut link_bytes = vec![0u8; caplen as usize];
        if read_full(&mut self.inner, &mut link_bytes)? != caplen as usize {
            return Err(Error::Truncated { index: self.index });
        }
        self.index += 1;
        Ok(Some(RawPacket {
            ts_sec,
            ts_usec,
            link_bytes,
            caplen,
            origlen,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawPacket>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn parse_pcap<R: Read>(stream: R) -> Result<Vec<RawPacket>> {
    PcapReader::new(stream)?.collect()
}

/// Writes a little-endian classic capture with snaplen 65535.
pub fn write_pcap<W: Write>(mut out: W, packets: &[RawPacket]) -> Result<()> {
    let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
    hdr.extend_from_slice(&MAGIC.to_le_bytes());
    hdr.extend_from_slice(&2u16.to_le_bytes());
    hdr.extend_from_slice(&4u16.to_le_bytes());
    hdr.extend_from_slice(&0i32.to_le_bytes());
    hdr.extend_from_slice(&0u32.to_le_bytes());
    hdr.extend_from_slice(&65535u32.to_le_bytes());
    hdr.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    out.write_all(&hdr)?;
    for p in packets {
        out.write_all(&p.ts_sec.to_le_bytes())?;
        out.write_all(&p.ts_usec.to_le_bytes())?;
        out.write_all(&(p.link_bytes.len() as u32).to_le_bytes())?;
        out.write_all(&p.origlen.max(p.link_bytes.len() as u32).to_le_bytes())?;
        out.write_all(&p.link_bytes)?;
    }
    Ok(())
}

fn field(b: &[u8], swapped: bool) -> u32 {
    let v = u32::from_le_bytes(b.try_into().unwrap());
    if swapped {
        v.swap_bytes()
    } else {
        v
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(n)
}
