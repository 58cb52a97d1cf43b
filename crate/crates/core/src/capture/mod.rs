//! Pcap parsing, stream assembly, and host labeling via SNI and DNS.

pub mod dns;
pub mod frame;
pub mod pcap;
pub mod sni;

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dns::{build_dns_map, DnsMap};
pub use pcap::{read_pcap, write_pcap, PcapContents, SkipCounts};

/// Extract the TLS server name from a stream, if any TCP payload in it
/// starts with a ClientHello carrying one.
pub fn extract_sni(stream: &Stream) -> Option<String> {
    if stream.proto() != Transport::Tcp {
        return None;
    }
    stream
        .packets
        .iter()
        .find_map(|p| sni::sni_from_payload(p.payload_bytes()))
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("not a classic pcap file (bad magic)")]
    BadMagic,
    #[error("unsupported link type {0} (only Ethernet is parsed)")]
    UnsupportedLinkType(u32),
    #[error("truncated pcap file: {0}")]
    TruncatedFile(&'static str),
    #[error("malformed stream line: {0}")]
    BadStreamLine(String),
}

/// Transport protocol of a parsed packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Tcp => write!(f, "tcp"),
            Transport::Udp => write!(f, "udp"),
        }
    }
}

/// One captured IPv4 TCP/UDP packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Transport,
    /// Transport payload bytes (offsets into `link_frame`).
    pub payload: std::ops::Range<usize>,
    /// The raw captured frame, written back verbatim by `write_pcap`.
    pub link_frame: Vec<u8>,
}

impl PacketRecord {
    pub fn payload_len(&self) -> u32 {
        (self.payload.end - self.payload.start) as u32
    }

    pub fn payload_bytes(&self) -> &[u8] {
        &self.link_frame[self.payload.clone()]
    }

    /// Timestamp in whole microseconds.
    pub fn ts_micros(&self) -> u64 {
        self.ts_sec as u64 * 1_000_000 + self.ts_usec as u64
    }

    pub fn endpoints(&self) -> ((Ipv4Addr, u16), (Ipv4Addr, u16)) {
        ((self.src_ip, self.src_port), (self.dst_ip, self.dst_port))
    }
}

/// Canonical bidirectional flow key: the lexicographically smaller
/// (ip, port) endpoint always comes first, so both packet directions
/// map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub lo: (Ipv4Addr, u16),
    pub hi: (Ipv4Addr, u16),
    pub proto: Transport,
}

impl FlowKey {
    pub fn new(a: (Ipv4Addr, u16), b: (Ipv4Addr, u16), proto: Transport) -> Self {
        if (a.0.octets(), a.1) <= (b.0.octets(), b.1) {
            FlowKey { lo: a, hi: b, proto }
        } else {
            FlowKey { lo: b, hi: a, proto }
        }
    }

    pub fn of_packet(p: &PacketRecord) -> Self {
        let (src, dst) = p.endpoints();
        FlowKey::new(src, dst, p.proto)
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}/{}",
            self.lo.0, self.lo.1, self.hi.0, self.hi.1, self.proto
        )
    }
}

impl FromStr for FlowKey {
    type Err = CaptureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CaptureError::BadStreamLine(format!("bad flow key {s:?}"));
        let (pair, proto) = s.rsplit_once('/').ok_or_else(bad)?;
        let proto = match proto {
            "tcp" => Transport::Tcp,
            "udp" => Transport::Udp,
            _ => return Err(bad()),
        };
        let (lo, hi) = pair.split_once('-').ok_or_else(bad)?;
        let parse_ep = |ep: &str| -> Result<(Ipv4Addr, u16), CaptureError> {
            let (ip, port) = ep.rsplit_once(':').ok_or_else(bad)?;
            Ok((
                ip.parse().map_err(|_| bad())?,
                port.parse().map_err(|_| bad())?,
            ))
        };
        Ok(FlowKey::new(parse_ep(lo)?, parse_ep(hi)?, proto))
    }
}

/// All packets sharing one canonical 5-tuple, time-ordered.
#[derive(Debug, Clone)]
pub struct Stream {
    pub key: FlowKey,
    pub device_ip: Ipv4Addr,
    pub packets: Vec<PacketRecord>,
    pub host: Option<String>,
    pub app_label: Option<String>,
    pub activity_label: Option<String>,
    /// No endpoint matches `device_ip`; the sign convention is undefined,
    /// so the stream is excluded from feature extraction.
    pub foreign: bool,
}

impl Stream {
    /// True for DNS resolution flows, which support labeling but are not
    /// classification samples themselves.
    pub fn is_dns(&self) -> bool {
        self.proto() == Transport::Udp && (self.key.lo.1 == 53 || self.key.hi.1 == 53)
    }

    pub fn proto(&self) -> Transport {
        self.key.proto
    }

    /// The endpoint that is not the device, if the stream involves the device.
    pub fn remote_endpoint(&self) -> Option<(Ipv4Addr, u16)> {
        if self.key.lo.0 == self.device_ip {
            Some(self.key.hi)
        } else if self.key.hi.0 == self.device_ip {
            Some(self.key.lo)
        } else {
            None
        }
    }

    /// Per-packet samples for feature extraction: timestamp, direction, size.
    pub fn samples(&self) -> Vec<PacketSample> {
        self.packets
            .iter()
            .map(|p| PacketSample {
                ts_sec: p.ts_sec,
                ts_usec: p.ts_usec,
                outgoing: p.src_ip == self.device_ip,
                size: p.payload_len(),
            })
            .collect()
    }
}

/// The slice of a packet the learning pipeline consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketSample {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub outgoing: bool,
    pub size: u32,
}

impl PacketSample {
    pub fn ts_micros(&self) -> u64 {
        self.ts_sec as u64 * 1_000_000 + self.ts_usec as u64
    }
}

/// Group packets into bidirectional streams keyed by canonical 5-tuple.
///
/// Packets keep capture order within equal timestamps; streams come out
/// ordered by their first packet's timestamp.
pub fn assemble_streams(packets: &[PacketRecord], device_ip: Ipv4Addr) -> Vec<Stream> {
    let mut index: HashMap<FlowKey, usize> = HashMap::new();
    let mut streams: Vec<Stream> = Vec::new();
    for p in packets {
        let key = FlowKey::of_packet(p);
        let idx = *index.entry(key).or_insert_with(|| {
            streams.push(Stream {
                key,
                device_ip,
                packets: Vec::new(),
                host: None,
                app_label: None,
                activity_label: None,
                foreign: key.lo.0 != device_ip && key.hi.0 != device_ip,
            });
            streams.len() - 1
        });
        streams[idx].packets.push(p.clone());
    }
    for s in &mut streams {
        s.packets.sort_by_key(|p| p.ts_micros());
    }
    streams.sort_by_key(|s| s.packets.first().map(|p| p.ts_micros()).unwrap_or(0));
    streams
}

/// Label a stream's host: SNI if present, else the DNS mapping of the
/// remote endpoint. The result is stored on the stream and returned.
pub fn label_host(stream: &mut Stream, dns_map: &HashMap<Ipv4Addr, String>) -> Option<String> {
    let host = extract_sni(stream).or_else(|| {
        stream
            .remote_endpoint()
            .and_then(|(ip, _)| dns_map.get(&ip).cloned())
    });
    stream.host = host.clone();
    host
}

/// One line of the stream export: everything downstream stages need.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ExportStream {
    pub key: String,
    pub host: Option<String>,
    pub app_label: Option<String>,
    pub activity_label: Option<String>,
    /// `[ts_sec, ts_usec, direction, size]` per packet; direction 1 = out.
    pub packets: Vec<(u32, u32, u8, u32)>,
}

impl ExportStream {
    pub fn from_stream(stream: &Stream) -> Self {
        ExportStream {
            key: stream.key.to_string(),
            host: stream.host.clone(),
            app_label: stream.app_label.clone(),
            activity_label: stream.activity_label.clone(),
            packets: stream
                .samples()
                .iter()
                .map(|s| (s.ts_sec, s.ts_usec, s.outgoing as u8, s.size))
                .collect(),
        }
    }

    pub fn samples(&self) -> Vec<PacketSample> {
        self.packets
            .iter()
            .map(|&(ts_sec, ts_usec, dir, size)| PacketSample {
                ts_sec,
                ts_usec,
                outgoing: dir == 1,
                size,
            })
            .collect()
    }
}

/// Serialize streams as JSON lines.
pub fn write_streams_jsonl(streams: &[ExportStream]) -> String {
    let mut out = String::new();
    for s in streams {
        out.push_str(&serde_json::to_string(s).expect("stream line serializes"));
        out.push('\n');
    }
    out
}

/// Parse a stream JSONL document.
pub fn read_streams_jsonl(text: &str) -> Result<Vec<ExportStream>, CaptureError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CaptureError::BadStreamLine(e.to_string())))
        .collect()
}
