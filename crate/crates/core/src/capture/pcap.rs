//! Classic pcap (libpcap) reading and writing.
//!
//! Version 2.4, Ethernet link type only. Reading accepts either byte order;
//! writing always emits the big-endian magic so output is byte-deterministic.

use super::frame::{parse_frame, FrameParse};
use super::{CaptureError, PacketRecord};

const MAGIC_BE: u32 = 0xa1b2c3d4;
const MAGIC_LE: u32 = 0xd4c3b2a1;
const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const SNAPLEN: u32 = 65535;

/// Frames read but not turned into records, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SkipCounts {
    pub vlan: u32,
    pub non_ipv4: u32,
    pub non_transport: u32,
    pub malformed: u32,
}

impl SkipCounts {
    pub fn total(&self) -> u32 {
        self.vlan + self.non_ipv4 + self.non_transport + self.malformed
    }
}

/// Records plus skip counters from one pcap file.
#[derive(Debug, Default)]
pub struct PcapContents {
    pub records: Vec<PacketRecord>,
    pub skipped: SkipCounts,
}

/// Parse a classic pcap file into IPv4 TCP/UDP packet records.
pub fn read_pcap(bytes: &[u8]) -> Result<PcapContents, CaptureError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::TruncatedFile("global header"));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let big_endian = match magic {
        MAGIC_BE => true,
        MAGIC_LE => false,
        _ => return Err(CaptureError::BadMagic),
    };
    let read_u32 = |b: &[u8], at: usize| -> u32 {
        let w: [u8; 4] = b[at..at + 4].try_into().unwrap();
        if big_endian {
            u32::from_be_bytes(w)
        } else {
            u32::from_le_bytes(w)
        }
    };
    let linktype = read_u32(bytes, 20);
    if linktype != LINKTYPE_ETHERNET {
        return Err(CaptureError::UnsupportedLinkType(linktype));
    }

    let mut contents = PcapContents::default();
    let mut at = GLOBAL_HEADER_LEN;
    while at < bytes.len() {
        if bytes.len() - at < RECORD_HEADER_LEN {
            return Err(CaptureError::TruncatedFile("record header"));
        }
        let ts_sec = read_u32(bytes, at);
        let ts_usec = read_u32(bytes, at + 4);
        let incl_len = read_u32(bytes, at + 8) as usize;
        at += RECORD_HEADER_LEN;
        if bytes.len() - at < incl_len {
            return Err(CaptureError::TruncatedFile("record body"));
        }
        let frame = &bytes[at..at + incl_len];
        at += incl_len;

        match parse_frame(frame) {
            FrameParse::Transport(t) => contents.records.push(PacketRecord {
                ts_sec,
                ts_usec,
                src_ip: t.src_ip,
                dst_ip: t.dst_ip,
                src_port: t.src_port,
                dst_port: t.dst_port,
                proto: t.proto,
                payload: t.payload,
                link_frame: frame.to_vec(),
            }),
            FrameParse::Vlan => contents.skipped.vlan += 1,
            FrameParse::NonIpv4 => contents.skipped.non_ipv4 += 1,
            FrameParse::NonTransport => contents.skipped.non_transport += 1,
            FrameParse::Malformed => contents.skipped.malformed += 1,
        }
    }
    Ok(contents)
}

/// Serialize records as a big-endian classic pcap file. `read_pcap` inverts
/// this exactly.
pub fn write_pcap(records: &[PacketRecord]) -> Vec<u8> {
    let body: usize = records
        .iter()
        .map(|r| RECORD_HEADER_LEN + r.link_frame.len())
        .sum();
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + body);
    out.extend_from_slice(&MAGIC_BE.to_be_bytes());
    out.extend_from_slice(&2u16.to_be_bytes()); // version major
    out.extend_from_slice(&4u16.to_be_bytes()); // version minor
    out.extend_from_slice(&0i32.to_be_bytes()); // thiszone
    out.extend_from_slice(&0u32.to_be_bytes()); // sigfigs
    out.extend_from_slice(&SNAPLEN.to_be_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_be_bytes());
    for r in records {
        out.extend_from_slice(&r.ts_sec.to_be_bytes());
        out.extend_from_slice(&r.ts_usec.to_be_bytes());
        out.extend_from_slice(&(r.link_frame.len() as u32).to_be_bytes());
        out.extend_from_slice(&(r.link_frame.len() as u32).to_be_bytes());
        out.extend_from_slice(&r.link_frame);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::frame::{build_tcp_frame, build_udp_frame};
    use crate::capture::Transport;
    use rand::Rng;
    use std::net::Ipv4Addr;

    #[test]
    fn empty_file_is_header_only() {
        let bytes = write_pcap(&[]);
        assert_eq!(bytes.len(), 24);
        let contents = read_pcap(&bytes).unwrap();
        assert!(contents.records.is_empty());
        assert_eq!(contents.skipped.total(), 0);
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(matches!(
            read_pcap(&[0u8; 24]),
            Err(CaptureError::BadMagic)
        ));
    }

    #[test]
    fn unsupported_linktype_is_rejected() {
        let mut bytes = write_pcap(&[]);
        bytes[20..24].copy_from_slice(&101u32.to_be_bytes()); // raw IP
        assert!(matches!(
            read_pcap(&bytes),
            Err(CaptureError::UnsupportedLinkType(101))
        ));
    }

    #[test]
    fn truncation_is_reported() {
        let rec = sample_record(7, Transport::Udp, 60);
        let bytes = write_pcap(&[rec]);
        assert!(matches!(
            read_pcap(&bytes[..30]),
            Err(CaptureError::TruncatedFile(_))
        ));
        assert!(matches!(
            read_pcap(&bytes[..bytes.len() - 5]),
            Err(CaptureError::TruncatedFile(_))
        ));
    }

    fn sample_record(seed: u64, proto: Transport, payload_len: usize) -> PacketRecord {
        let mut rng = crate::util::substream(seed, "pcap/sample");
        let src = Ipv4Addr::new(10, 0, 0, rng.gen());
        let dst = Ipv4Addr::new(203, 0, 113, rng.gen());
        let sp: u16 = rng.gen_range(1024..65000);
        let dp: u16 = rng.gen_range(1..1024);
        let payload: Vec<u8> = (0..payload_len).map(|_| rng.gen()).collect();
        let frame = match proto {
            Transport::Udp => build_udp_frame(src, sp, dst, dp, rng.gen(), &payload),
            Transport::Tcp => {
                build_tcp_frame(src, sp, dst, dp, rng.gen(), rng.gen(), rng.gen(), &payload)
            }
        };
        let parsed = match crate::capture::frame::parse_frame(&frame) {
            crate::capture::frame::FrameParse::Transport(t) => t,
            _ => unreachable!(),
        };
        PacketRecord {
            ts_sec: rng.gen_range(0..2_000_000_000),
            ts_usec: rng.gen_range(0..1_000_000),
            src_ip: src,
            dst_ip: dst,
            src_port: sp,
            dst_port: dp,
            proto,
            payload: parsed.payload,
            link_frame: frame,
        }
    }

    #[test]
    fn round_trip_identity_on_generated_records() {
        let mut rng = crate::util::substream(11, "pcap/roundtrip");
        for case in 0..50u64 {
            let n = rng.gen_range(0..20);
            let records: Vec<PacketRecord> = (0..n)
                .map(|i| {
                    let proto = if rng.gen() { Transport::Tcp } else { Transport::Udp };
                    sample_record(case * 1000 + i, proto, rng.gen_range(0..1400))
                })
                .collect();
            let bytes = write_pcap(&records);
            let back = read_pcap(&bytes).unwrap();
            assert_eq!(back.records, records);
            assert_eq!(back.skipped.total(), 0);
            // Byte-level identity too: re-writing reproduces the file.
            assert_eq!(write_pcap(&back.records), bytes);
        }
    }

    /// A one-packet file built byte by byte from the pcap, Ethernet, IPv4,
    /// and UDP header layouts, checked field by field.
    #[test]
    fn crafted_single_udp_packet_file() {
        let payload = [0x5au8; 60];
        let mut ip_header: Vec<u8> = vec![
            0x45, 0x00, // version 4, ihl 5, tos 0
            0x00, 0x58, // total length 20 + 8 + 60 = 88
            0x00, 0x2a, // identification 42
            0x40, 0x00, // DF
            0x40, 0x11, // ttl 64, protocol UDP
            0x00, 0x00, // checksum (left zero: readers must not require it)
            192, 0, 2, 1, // src
            192, 0, 2, 2, // dst
        ];
        let udp_header: Vec<u8> = vec![
            0x30, 0x39, // src port 12345
            0x00, 0x35, // dst port 53
            0x00, 0x44, // length 8 + 60 = 68
            0x00, 0x00, // checksum 0 (legal for UDP)
        ];
        let mut frame = vec![
            0x02, 0x00, 0xc0, 0x00, 0x02, 0x02, // dst mac
            0x02, 0x00, 0xc0, 0x00, 0x02, 0x01, // src mac
            0x08, 0x00, // ethertype IPv4
        ];
        frame.append(&mut ip_header);
        frame.extend_from_slice(&udp_header);
        frame.extend_from_slice(&payload);
        assert_eq!(frame.len(), 14 + 88);

        let mut file = Vec::new();
        file.extend_from_slice(&0xa1b2c3d4u32.to_be_bytes());
        file.extend_from_slice(&[0x00, 0x02, 0x00, 0x04]); // version 2.4
        file.extend_from_slice(&[0u8; 8]); // thiszone, sigfigs
        file.extend_from_slice(&65535u32.to_be_bytes());
        file.extend_from_slice(&1u32.to_be_bytes()); // Ethernet
        file.extend_from_slice(&1234u32.to_be_bytes()); // ts_sec
        file.extend_from_slice(&567u32.to_be_bytes()); // ts_usec
        file.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        file.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        file.extend_from_slice(&frame);

        let contents = read_pcap(&file).unwrap();
        assert_eq!(contents.records.len(), 1);
        let r = &contents.records[0];
        assert_eq!(r.ts_sec, 1234);
        assert_eq!(r.ts_usec, 567);
        assert_eq!(r.src_ip, Ipv4Addr::new(192, 0, 2, 1));
        assert_eq!(r.dst_ip, Ipv4Addr::new(192, 0, 2, 2));
        assert_eq!(r.src_port, 12345);
        assert_eq!(r.dst_port, 53);
        assert_eq!(r.proto, Transport::Udp);
        assert_eq!(r.payload_len(), 60);
        assert_eq!(r.payload_bytes(), &payload);
    }

    #[test]
    fn little_endian_files_parse() {
        let rec = sample_record(3, Transport::Tcp, 100);
        let be = write_pcap(&[rec.clone()]);
        // Rewrite the same file little-endian by hand.
        let mut le = Vec::new();
        le.extend_from_slice(&0xa1b2c3d4u32.to_le_bytes());
        le.extend_from_slice(&2u16.to_le_bytes());
        le.extend_from_slice(&4u16.to_le_bytes());
        le.extend_from_slice(&[0u8; 8]);
        le.extend_from_slice(&65535u32.to_le_bytes());
        le.extend_from_slice(&1u32.to_le_bytes());
        le.extend_from_slice(&rec.ts_sec.to_le_bytes());
        le.extend_from_slice(&rec.ts_usec.to_le_bytes());
        le.extend_from_slice(&(rec.link_frame.len() as u32).to_le_bytes());
        le.extend_from_slice(&(rec.link_frame.len() as u32).to_le_bytes());
        le.extend_from_slice(&rec.link_frame);

        let from_be = read_pcap(&be).unwrap();
        let from_le = read_pcap(&le).unwrap();
        assert_eq!(from_be.records, from_le.records);
    }

    #[test]
    fn non_transport_frames_are_counted_not_returned() {
        let rec = sample_record(5, Transport::Udp, 30);
        let mut arp_frame = rec.link_frame.clone();
        arp_frame[12..14].copy_from_slice(&0x0806u16.to_be_bytes());
        let arp = PacketRecord {
            link_frame: arp_frame,
            ..rec.clone()
        };
        let bytes = write_pcap(&[arp, rec.clone()]);
        let contents = read_pcap(&bytes).unwrap();
        assert_eq!(contents.records.len(), 1);
        assert_eq!(contents.skipped.non_ipv4, 1);
        assert_eq!(contents.records[0], rec);
    }
}
