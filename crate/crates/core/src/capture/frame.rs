//! Ethernet/IPv4/TCP/UDP frame parsing and construction.
//!
//! Parsing feeds [`super::pcap::read_pcap`]; construction is shared by the
//! synthetic generator and by tests that need byte-exact fixtures.

use std::net::Ipv4Addr;

use super::Transport;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETH_HEADER_LEN: usize = 14;

/// Outcome of parsing one captured link frame.
#[derive(Debug)]
pub enum FrameParse {
    Transport(TransportFrame),
    /// 802.1Q tagged frame; not parsed further.
    Vlan,
    /// Ethertype other than IPv4 (ARP, IPv6, ...).
    NonIpv4,
    /// IPv4 but neither TCP nor UDP, or a non-first fragment.
    NonTransport,
    /// Headers inconsistent with the captured length.
    Malformed,
}

/// The fields read_pcap needs from an IPv4 TCP/UDP frame.
#[derive(Debug)]
pub struct TransportFrame {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub proto: Transport,
    pub src_port: u16,
    pub dst_port: u16,
    /// Transport payload byte range within the frame.
    pub payload: std::ops::Range<usize>,
}

fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

/// Parse one Ethernet frame down to the transport payload.
pub fn parse_frame(frame: &[u8]) -> FrameParse {
    let Some(ethertype) = be16(frame, 12) else {
        return FrameParse::Malformed;
    };
    match ethertype {
        ETHERTYPE_VLAN => return FrameParse::Vlan,
        ETHERTYPE_IPV4 => {}
        _ => return FrameParse::NonIpv4,
    }
    let ip = &frame[ETH_HEADER_LEN..];
    let Some(&ver_ihl) = ip.first() else {
        return FrameParse::Malformed;
    };
    if ver_ihl >> 4 != 4 {
        return FrameParse::Malformed;
    }
    let ihl = ((ver_ihl & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return FrameParse::Malformed;
    }
    let Some(total_len) = be16(ip, 2) else {
        return FrameParse::Malformed;
    };
    let total_len = total_len as usize;
    if total_len < ihl || ip.len() < total_len {
        return FrameParse::Malformed;
    }
    let Some(flags_frag) = be16(ip, 6) else {
        return FrameParse::Malformed;
    };
    // Non-first fragments carry no transport header.
    if flags_frag & 0x1fff != 0 {
        return FrameParse::NonTransport;
    }
    let proto = match ip[9] {
        6 => Transport::Tcp,
        17 => Transport::Udp,
        _ => return FrameParse::NonTransport,
    };
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    let th = &ip[ihl..total_len];
    let (src_port, dst_port, header_len) = match proto {
        Transport::Tcp => {
            let (Some(sp), Some(dp), Some(&off)) = (be16(th, 0), be16(th, 2), th.get(12)) else {
                return FrameParse::Malformed;
            };
            let data_off = ((off >> 4) as usize) * 4;
            if data_off < 20 || th.len() < data_off {
                return FrameParse::Malformed;
            }
            (sp, dp, data_off)
        }
        Transport::Udp => {
            let (Some(sp), Some(dp), Some(ulen)) = (be16(th, 0), be16(th, 2), be16(th, 4)) else {
                return FrameParse::Malformed;
            };
            let ulen = ulen as usize;
            if ulen < 8 || th.len() < ulen {
                return FrameParse::Malformed;
            }
            (sp, dp, 8)
        }
    };
    let payload_start = ETH_HEADER_LEN + ihl + header_len;
    let payload_end = match proto {
        // UDP length field governs; IP total_len governs TCP.
        Transport::Udp => {
            ETH_HEADER_LEN + ihl + be16(th, 4).map(usize::from).unwrap_or(8)
        }
        Transport::Tcp => ETH_HEADER_LEN + total_len,
    };
    if payload_end < payload_start || payload_end > frame.len() {
        return FrameParse::Malformed;
    }
    FrameParse::Transport(TransportFrame {
        src_ip,
        dst_ip,
        proto,
        src_port,
        dst_port,
        payload: payload_start..payload_end,
    })
}

fn ip_checksum(header: &[u8]) -> u16 {
    ones_complement_sum(header, 0)
}

fn ones_complement_sum(bytes: &[u8], init: u32) -> u16 {
    let mut sum = init;
    let mut chunks = bytes.chunks_exact(2);
    for c in &mut chunks {
        sum += u16::from_be_bytes([c[0], c[1]]) as u32;
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u32) << 8;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn transport_checksum(src: Ipv4Addr, dst: Ipv4Addr, proto: u8, segment: &[u8]) -> u16 {
    let mut pseudo = Vec::with_capacity(12);
    pseudo.extend_from_slice(&src.octets());
    pseudo.extend_from_slice(&dst.octets());
    pseudo.push(0);
    pseudo.push(proto);
    pseudo.extend_from_slice(&(segment.len() as u16).to_be_bytes());
    let mut sum = 0u32;
    for c in pseudo.chunks_exact(2) {
        sum += u16::from_be_bytes([c[0], c[1]]) as u32;
    }
    let csum = ones_complement_sum(segment, sum);
    // 0 means "no checksum" for UDP; transmit as all-ones instead.
    if csum == 0 {
        0xffff
    } else {
        csum
    }
}

fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    // Locally administered, derived from the address for determinism.
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn push_ipv4_header(
    frame: &mut Vec<u8>,
    src: Ipv4Addr,
    dst: Ipv4Addr,
    proto: u8,
    payload_len: usize,
    ident: u16,
) {
    let total_len = (20 + payload_len) as u16;
    let start = frame.len();
    frame.push(0x45);
    frame.push(0);
    frame.extend_from_slice(&total_len.to_be_bytes());
    frame.extend_from_slice(&ident.to_be_bytes());
    frame.extend_from_slice(&0x4000u16.to_be_bytes()); // DF
    frame.push(64);
    frame.push(proto);
    frame.extend_from_slice(&[0, 0]); // checksum placeholder
    frame.extend_from_slice(&src.octets());
    frame.extend_from_slice(&dst.octets());
    let csum = ip_checksum(&frame[start..start + 20]);
    frame[start + 10..start + 12].copy_from_slice(&csum.to_be_bytes());
}

fn push_ethernet_header(frame: &mut Vec<u8>, src: Ipv4Addr, dst: Ipv4Addr) {
    frame.extend_from_slice(&mac_for(dst));
    frame.extend_from_slice(&mac_for(src));
    frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
}

/// Build a complete Ethernet/IPv4/UDP frame around `payload`.
pub fn build_udp_frame(
    src: Ipv4Addr,
    src_port: u16,
    dst: Ipv4Addr,
    dst_port: u16,
    ident: u16,
    payload: &[u8],
) -> Vec<u8> {
    let mut frame = Vec::with_capacity(ETH_HEADER_LEN + 28 + payload.len());
    push_ethernet_header(&mut frame, src, dst);
    push_ipv4_header(&mut frame, src, dst, 17, 8 + payload.len(), ident);
    let seg_start = frame.len();
    frame.extend_from_slice(&src_port.to_be_bytes());
    frame.extend_from_slice(&dst_port.to_be_bytes());
    frame.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
    frame.extend_from_slice(&[0, 0]);
    frame.extend_from_slice(payload);
    let csum = transport_checksum(src, dst, 17, &frame[seg_start..]);
    frame[seg_start + 6..seg_start + 8].copy_from_slice(&csum.to_be_bytes());
    frame
}

/// Build a complete Ethernet/IPv4/TCP frame around `payload` (PSH+ACK, no options).
#[allow(clippy::too_many_arguments)]
pub fn build_tcp_frame(
    src: Ipv4Addr,
    src_port: u16,
    dst: Ipv4Addr,
    dst_port: u16,
    seq: u32,
    ack: u32,
    ident: u16,
    payload: &[u8],
) -> Vec<u8> {
    let mut frame = Vec::with_capacity(ETH_HEADER_LEN + 40 + payload.len());
    push_ethernet_header(&mut frame, src, dst);
    push_ipv4_header(&mut frame, src, dst, 6, 20 + payload.len(), ident);
    let seg_start = frame.len();
    frame.extend_from_slice(&src_port.to_be_bytes());
    frame.extend_from_slice(&dst_port.to_be_bytes());
    frame.extend_from_slice(&seq.to_be_bytes());
    frame.extend_from_slice(&ack.to_be_bytes());
    frame.push(5 << 4); // data offset 5 words
    frame.push(0x18); // PSH|ACK
    frame.extend_from_slice(&65535u16.to_be_bytes());
    frame.extend_from_slice(&[0, 0]);
    frame.extend_from_slice(&0u16.to_be_bytes()); // urgent
    frame.extend_from_slice(payload);
    let csum = transport_checksum(src, dst, 6, &frame[seg_start..]);
    frame[seg_start + 16..seg_start + 18].copy_from_slice(&csum.to_be_bytes());
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);
    const B: Ipv4Addr = Ipv4Addr::new(203, 0, 113, 9);

    #[test]
    fn udp_frame_round_trips_through_parse() {
        let frame = build_udp_frame(A, 40000, B, 53, 7, b"hello dns");
        match parse_frame(&frame) {
            FrameParse::Transport(t) => {
                assert_eq!(t.src_ip, A);
                assert_eq!(t.dst_ip, B);
                assert_eq!(t.proto, Transport::Udp);
                assert_eq!(t.src_port, 40000);
                assert_eq!(t.dst_port, 53);
                assert_eq!(&frame[t.payload], b"hello dns");
            }
            other => panic!("expected transport frame, got {other:?}"),
        }
    }

    #[test]
    fn tcp_frame_round_trips_through_parse() {
        let payload = vec![0xabu8; 700];
        let frame = build_tcp_frame(B, 443, A, 40001, 1000, 2000, 9, &payload);
        match parse_frame(&frame) {
            FrameParse::Transport(t) => {
                assert_eq!(t.proto, Transport::Tcp);
                assert_eq!(t.src_port, 443);
                assert_eq!(t.dst_port, 40001);
                assert_eq!(&frame[t.payload], &payload[..]);
            }
            other => panic!("expected transport frame, got {other:?}"),
        }
    }

    #[test]
    fn ipv4_header_checksum_validates() {
        let frame = build_udp_frame(A, 1, B, 2, 0, b"x");
        // Recomputing the checksum over the header with the stored value
        // in place must give zero.
        let header = &frame[ETH_HEADER_LEN..ETH_HEADER_LEN + 20];
        let mut sum = 0u32;
        for c in header.chunks_exact(2) {
            sum += u16::from_be_bytes([c[0], c[1]]) as u32;
        }
        while sum >> 16 != 0 {
            sum = (sum & 0xffff) + (sum >> 16);
        }
        assert_eq!(sum as u16, 0xffff);
    }

    #[test]
    fn vlan_and_arp_are_flagged() {
        let mut vlan = build_udp_frame(A, 1, B, 2, 0, b"x");
        vlan[12..14].copy_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
        assert!(matches!(parse_frame(&vlan), FrameParse::Vlan));

        let mut arp = build_udp_frame(A, 1, B, 2, 0, b"x");
        arp[12..14].copy_from_slice(&0x0806u16.to_be_bytes());
        assert!(matches!(parse_frame(&arp), FrameParse::NonIpv4));
    }

    #[test]
    fn truncated_ip_header_is_malformed() {
        let frame = build_udp_frame(A, 1, B, 2, 0, b"payload");
        assert!(matches!(parse_frame(&frame[..20]), FrameParse::Malformed));
    }

    #[test]
    fn fragment_is_skipped_as_non_transport() {
        let mut frame = build_udp_frame(A, 1, B, 2, 0, b"payload");
        // Set a nonzero fragment offset.
        frame[ETH_HEADER_LEN + 6..ETH_HEADER_LEN + 8].copy_from_slice(&0x00aau16.to_be_bytes());
        assert!(matches!(parse_frame(&frame), FrameParse::NonTransport));
    }
}
