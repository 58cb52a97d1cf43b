//! Single-stream generation: DNS resolution, a ClientHello, then data
//! packets drawn from the class distributions.

use std::net::Ipv4Addr;

use rand::Rng;

use crate::capture::frame::{build_tcp_frame, build_udp_frame, parse_frame, FrameParse};
use crate::capture::{dns, sni, FlowKey, PacketRecord, Transport};

use super::ClassProfile;

/// Placement of one stream inside a dataset: addresses, ports, and clock.
#[derive(Debug, Clone, Copy)]
pub struct StreamEnv {
    pub device_ip: Ipv4Addr,
    pub server_ip: Ipv4Addr,
    pub resolver_ip: Ipv4Addr,
    /// Client ephemeral port, also used as the DNS source port; must be
    /// unique per stream within a dataset.
    pub client_port: u16,
    pub dns_ident: u16,
    pub start_micros: u64,
}

/// One generated stream plus its ground-truth labels.
#[derive(Debug, Clone)]
pub struct GenStream {
    /// DNS pair then TCP packets, timestamps strictly increasing.
    pub records: Vec<PacketRecord>,
    /// Canonical key of the TCP flow, as the ingest pipeline will print it.
    pub flow_key: String,
    pub app: String,
    pub activity: Option<String>,
}

fn record(ts_micros: u64, frame: Vec<u8>) -> PacketRecord {
    let t = match parse_frame(&frame) {
        FrameParse::Transport(t) => t,
        other => unreachable!("built frame failed to parse: {other:?}"),
    };
    PacketRecord {
        ts_sec: (ts_micros / 1_000_000) as u32,
        ts_usec: (ts_micros % 1_000_000) as u32,
        src_ip: t.src_ip,
        dst_ip: t.dst_ip,
        src_port: t.src_port,
        dst_port: t.dst_port,
        proto: t.proto,
        payload: t.payload,
        link_frame: frame,
    }
}

/// Generate one labeled stream.
///
/// Emits the DNS query/response for `profile.hostname`, then a ClientHello
/// (carrying the name as SNI unless suppressed), then `profile.length`
/// data packets with log-normal sizes and Markov directions. Every
/// timestamp advances by at least one microsecond.
pub fn gen_stream(profile: &ClassProfile, env: &StreamEnv, rng: &mut impl Rng) -> GenStream {
    let mut records = Vec::new();
    let mut t = env.start_micros;
    let mut ident: u16 = 0;
    let mut next_ident = || {
        ident = ident.wrapping_add(1);
        ident
    };

    // DNS resolution first, so hosts without SNI stay labelable.
    records.push(record(
        t,
        build_udp_frame(
            env.device_ip,
            env.client_port,
            env.resolver_ip,
            53,
            next_ident(),
            &dns::wire::query(env.dns_ident, &profile.hostname),
        ),
    ));
    t += 1_000 + rng.gen_range(0..2_000);
    records.push(record(
        t,
        build_udp_frame(
            env.resolver_ip,
            53,
            env.device_ip,
            env.client_port,
            next_ident(),
            &dns::wire::response(env.dns_ident, &profile.hostname, &[env.server_ip]),
        ),
    ));
    t += 2_000 + rng.gen_range(0..6_000);

    // Outgoing/incoming byte counters double as TCP sequence numbers.
    let mut seq = [1u32, 1u32];
    let mut push_tcp = |t: u64, outgoing: bool, payload: &[u8], records: &mut Vec<PacketRecord>| {
        let (src, sp, dst, dp) = if outgoing {
            (env.device_ip, env.client_port, env.server_ip, 443)
        } else {
            (env.server_ip, 443, env.device_ip, env.client_port)
        };
        let (me, other) = if outgoing { (0, 1) } else { (1, 0) };
        let frame =
            build_tcp_frame(src, sp, dst, dp, seq[me], seq[other], next_ident(), payload);
        seq[me] = seq[me].wrapping_add(payload.len() as u32);
        records.push(record(t, frame));
    };

    let hello = if profile.emit_sni {
        sni::wire::client_hello(profile.hostname.as_bytes())
    } else {
        sni::wire::client_hello_bare()
    };
    push_tcp(t, true, &hello, &mut records);

    let n = profile.length.draw(rng);
    let mut outgoing = true;
    for _ in 0..n {
        t += profile.gap.draw_micros(rng);
        let size = if outgoing { profile.size_out } else { profile.size_in }.draw(rng);
        push_tcp(t, outgoing, &vec![0u8; size as usize], &mut records);
        let stay = profile.stay[usize::from(!outgoing)];
        if !rng.gen_bool(stay) {
            outgoing = !outgoing;
        }
    }

    let flow_key = FlowKey::new(
        (env.device_ip, env.client_port),
        (env.server_ip, 443),
        Transport::Tcp,
    )
    .to_string();
    GenStream {
        records,
        flow_key,
        app: profile.app.clone(),
        activity: profile.activity.clone(),
    }
}
