//! DNS answer mapping: address of each A record answer -> queried name.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::{PacketRecord, Transport};

const TYPE_A: u16 = 1;
const CLASS_IN: u16 = 1;
/// Pointer-jump cap; real messages chain a handful at most.
const MAX_JUMPS: usize = 32;

/// Address-to-hostname mapping built from DNS responses, with counters for
/// the ingest report.
#[derive(Debug, Default)]
pub struct DnsMap {
    pub hosts: HashMap<Ipv4Addr, String>,
    pub responses: u32,
    pub malformed: u32,
}

/// Scan UDP port-53 packets and map every A answer address to the queried
/// name. Later answers overwrite earlier ones for the same address.
pub fn build_dns_map(packets: &[PacketRecord]) -> DnsMap {
    let mut map = DnsMap::default();
    for p in packets {
        if p.proto != Transport::Udp || (p.src_port != 53 && p.dst_port != 53) {
            continue;
        }
        match parse_response(p.payload_bytes()) {
            Ok(Some(answers)) => {
                map.responses += 1;
                for (addr, name) in answers {
                    map.hosts.insert(addr, name);
                }
            }
            Ok(None) => {} // a query, or a response with nothing to map
            Err(()) => map.malformed += 1,
        }
    }
    map
}

/// Parse one DNS message. `Ok(None)` for queries; `Ok(Some(pairs))` with the
/// (address, queried name) pairs of A answers for responses; `Err` when the
/// message violates the wire layout.
fn parse_response(msg: &[u8]) -> Result<Option<Vec<(Ipv4Addr, String)>>, ()> {
    if msg.len() < 12 {
        return Err(());
    }
    let flags = be16(msg, 2).ok_or(())?;
    if flags & 0x8000 == 0 {
        return Ok(None);
    }
    let qdcount = be16(msg, 4).ok_or(())?;
    let ancount = be16(msg, 6).ok_or(())?;
    if qdcount == 0 {
        return Ok(None);
    }

    let mut at = 12;
    let (queried, after) = decode_name(msg, at).ok_or(())?;
    at = after + 4; // qtype, qclass
    for _ in 1..qdcount {
        let (_, after) = decode_name(msg, at).ok_or(())?;
        at = after + 4;
    }

    let mut pairs = Vec::new();
    for _ in 0..ancount {
        let (_, after) = decode_name(msg, at).ok_or(())?;
        at = after;
        let rtype = be16(msg, at).ok_or(())?;
        let rclass = be16(msg, at + 2).ok_or(())?;
        let rdlength = be16(msg, at + 8).ok_or(())? as usize;
        at += 10;
        let rdata = msg.get(at..at + rdlength).ok_or(())?;
        at += rdlength;
        if rtype == TYPE_A && rclass == CLASS_IN && rdlength == 4 {
            let addr = Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]);
            pairs.push((addr, queried.clone()));
        }
    }
    Ok(Some(pairs))
}

fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

/// Decode a (possibly compressed) domain name starting at `at`. Returns the
/// dotted name and the offset just past the name's bytes at the original
/// location: a pointer occupies two bytes regardless of where it leads.
fn decode_name(msg: &[u8], at: usize) -> Option<(String, usize)> {
    let mut name = String::new();
    let mut pos = at;
    let mut end_before_jump = None;
    let mut jumps = 0;
    loop {
        let len = *msg.get(pos)? as usize;
        if len == 0 {
            let end = end_before_jump.unwrap_or(pos + 1);
            return Some((name, end));
        }
        if len & 0xc0 == 0xc0 {
            let lo = *msg.get(pos + 1)? as usize;
            if end_before_jump.is_none() {
                end_before_jump = Some(pos + 2);
            }
            jumps += 1;
            if jumps > MAX_JUMPS {
                return None;
            }
            pos = ((len & 0x3f) << 8) | lo;
            continue;
        }
        if len & 0xc0 != 0 {
            return None; // reserved label types
        }
        let label = msg.get(pos + 1..pos + 1 + len)?;
        if !name.is_empty() {
            name.push('.');
        }
        name.push_str(std::str::from_utf8(label).ok()?);
        if name.len() > 255 {
            return None;
        }
        pos += 1 + len;
    }
}

fn encode_name(name: &str, out: &mut Vec<u8>) {
    for label in name.split('.').filter(|l| !l.is_empty()) {
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.push(0);
}

/// DNS message builders shared by tests and the traffic generator.
pub mod wire {
    use super::*;

    /// Standard recursive query for an A record.
    pub fn query(ident: u16, name: &str) -> Vec<u8> {
        let mut msg = Vec::new();
        msg.extend_from_slice(&ident.to_be_bytes());
        msg.extend_from_slice(&0x0100u16.to_be_bytes()); // RD
        msg.extend_from_slice(&1u16.to_be_bytes()); // qdcount
        msg.extend_from_slice(&[0u8; 6]); // an, ns, ar
        encode_name(name, &mut msg);
        msg.extend_from_slice(&TYPE_A.to_be_bytes());
        msg.extend_from_slice(&CLASS_IN.to_be_bytes());
        msg
    }

    /// Response answering the query with A records, one per address, each
    /// owner name a compression pointer back to the question.
    pub fn response(ident: u16, name: &str, addrs: &[Ipv4Addr]) -> Vec<u8> {
        let mut msg = Vec::new();
        msg.extend_from_slice(&ident.to_be_bytes());
        msg.extend_from_slice(&0x8180u16.to_be_bytes()); // QR, RD, RA
        msg.extend_from_slice(&1u16.to_be_bytes());
        msg.extend_from_slice(&(addrs.len() as u16).to_be_bytes());
        msg.extend_from_slice(&[0u8; 4]);
        encode_name(name, &mut msg);
        msg.extend_from_slice(&TYPE_A.to_be_bytes());
        msg.extend_from_slice(&CLASS_IN.to_be_bytes());
        for addr in addrs {
            msg.extend_from_slice(&0xc00cu16.to_be_bytes()); // ptr to question
            msg.extend_from_slice(&TYPE_A.to_be_bytes());
            msg.extend_from_slice(&CLASS_IN.to_be_bytes());
            msg.extend_from_slice(&300u32.to_be_bytes()); // ttl
            msg.extend_from_slice(&4u16.to_be_bytes());
            msg.extend_from_slice(&addr.octets());
        }
        msg
    }
}
