//! Server name extraction from TLS ClientHello payloads.
//!
//! Looks only at the first TLS record of a TCP payload; handshakes split
//! across segments are simply not matched. All offsets are bounds-checked,
//! so arbitrary bytes never panic.

/// Read a big-endian u16 at `at`.
fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

/// Extract the server_name (host_name entry) from a TLS ClientHello, if the
/// payload starts with one.
pub fn sni_from_payload(payload: &[u8]) -> Option<String> {
    // TLS record header: type 22 (handshake), version, length.
    if *payload.get(0)? != 22 {
        return None;
    }
    let record_len = be16(payload, 3)? as usize;
    let record = payload.get(5..5 + record_len)?;

    // Handshake header: type 1 (client_hello), u24 length.
    if *record.get(0)? != 1 {
        return None;
    }
    let body_len = ((*record.get(1)? as usize) << 16)
        | ((*record.get(2)? as usize) << 8)
        | (*record.get(3)? as usize);
    let body = record.get(4..4 + body_len)?;

    // client_version(2) random(32) session_id<1..> cipher_suites<2..>
    // compression_methods<1..> extensions<2..>
    let mut at = 2 + 32;
    let session_id_len = *body.get(at)? as usize;
    at += 1 + session_id_len;
    let cipher_len = be16(body, at)? as usize;
    at += 2 + cipher_len;
    let compression_len = *body.get(at)? as usize;
    at += 1 + compression_len;

    let extensions_len = be16(body, at)? as usize;
    at += 2;
    let extensions = body.get(at..at + extensions_len)?;

    let mut ext_at = 0;
    while ext_at + 4 <= extensions.len() {
        let ext_type = be16(extensions, ext_at)?;
        let ext_len = be16(extensions, ext_at + 2)? as usize;
        let ext_body = extensions.get(ext_at + 4..ext_at + 4 + ext_len)?;
        ext_at += 4 + ext_len;
        if ext_type != 0 {
            continue;
        }
        // server_name_list: u16 list length, then entries of
        // name_type(1) + u16 length + bytes. Only host_name (0) counts.
        let list_len = be16(ext_body, 0)? as usize;
        let list = ext_body.get(2..2 + list_len)?;
        let mut name_at = 0;
        while name_at + 3 <= list.len() {
            let name_type = *list.get(name_at)?;
            let name_len = be16(list, name_at + 1)? as usize;
            let name = list.get(name_at + 3..name_at + 3 + name_len)?;
            if name_type == 0 {
                return String::from_utf8(name.to_vec()).ok();
            }
            name_at += 3 + name_len;
        }
    }
    None
}

/// ClientHello builders shared by tests and the traffic generator.
pub mod wire {
    /// Minimal ClientHello carrying a server_name extension, as one TLS
    /// record.
    pub fn client_hello(server_name: &[u8]) -> Vec<u8> {
        let mut sni_entry = vec![0u8]; // name_type host_name
        sni_entry.extend_from_slice(&(server_name.len() as u16).to_be_bytes());
        sni_entry.extend_from_slice(server_name);

        let mut sni_list = (sni_entry.len() as u16).to_be_bytes().to_vec();
        sni_list.extend_from_slice(&sni_entry);

        let mut extensions = Vec::new();
        extensions.extend_from_slice(&0u16.to_be_bytes()); // server_name
        extensions.extend_from_slice(&(sni_list.len() as u16).to_be_bytes());
        extensions.extend_from_slice(&sni_list);

        let mut body = Vec::new();
        body.extend_from_slice(&[0x03, 0x03]); // client_version TLS 1.2
        body.extend_from_slice(&[0x11; 32]); // random
        body.push(0); // empty session_id
        body.extend_from_slice(&2u16.to_be_bytes()); // one cipher suite
        body.extend_from_slice(&[0x13, 0x01]);
        body.push(1); // one compression method
        body.push(0); // null
        body.extend_from_slice(&(extensions.len() as u16).to_be_bytes());
        body.extend_from_slice(&extensions);

        let mut handshake = vec![1u8]; // client_hello
        let len = body.len() as u32;
        handshake.extend_from_slice(&len.to_be_bytes()[1..]); // u24
        handshake.extend_from_slice(&body);

        let mut record = vec![22u8, 0x03, 0x01]; // handshake, TLS 1.0 framing
        record.extend_from_slice(&(handshake.len() as u16).to_be_bytes());
        record.extend_from_slice(&handshake);
        record
    }

    /// ClientHello with no extensions block at all (pre-SNI style).
    pub fn client_hello_bare() -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&[0x03, 0x03]);
        body.extend_from_slice(&[0x22; 32]);
        body.push(0);
        body.extend_from_slice(&2u16.to_be_bytes());
        body.extend_from_slice(&[0x13, 0x02]);
        body.push(1);
        body.push(0);

        let mut handshake = vec![1u8];
        let len = body.len() as u32;
        handshake.extend_from_slice(&len.to_be_bytes()[1..]);
        handshake.extend_from_slice(&body);

        let mut record = vec![22u8, 0x03, 0x01];
        record.extend_from_slice(&(handshake.len() as u16).to_be_bytes());
        record.extend_from_slice(&handshake);
        record
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn extracts_name_from_built_hello() {
        let hello = wire::client_hello(b"chat.example.test");
        assert_eq!(sni_from_payload(&hello).as_deref(), Some("chat.example.test"));
    }

    /// Hand-assembled ClientHello with two extensions, SNI second, and a
    /// padded name list. Every length byte written out explicitly.
    #[test]
    fn extracts_name_from_crafted_hello() {
        #[rustfmt::skip]
        let payload: Vec<u8> = vec![
            22, 0x03, 0x01, 0x00, 72,           // record: handshake, len 72
            1, 0x00, 0x00, 68,                  // client_hello, len 68
            0x03, 0x03,                         // version
            // 32 bytes random
            0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
            16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31,
            2, 0xaa, 0xbb,                      // session_id, 2 bytes
            0x00, 4, 0x13, 0x01, 0x13, 0x02,    // two cipher suites
            1, 0,                               // null compression
            0x00, 21,                           // extensions length
            0x00, 0x0b, 0x00, 2, 0x01, 0x00,    // ec_point_formats first
            0x00, 0x00, 0x00, 11,               // server_name, len 11
            0x00, 9,                            // name list length
            0, 0x00, 6,                         // host_name, len 6
            b'a', b'.', b'b', b'.', b'c', b'd',
        ];
        assert_eq!(sni_from_payload(&payload).as_deref(), Some("a.b.cd"));
    }

    #[test]
    fn no_extensions_yields_none() {
        assert_eq!(sni_from_payload(&wire::client_hello_bare()), None);
    }

    #[test]
    fn non_handshake_records_yield_none() {
        let mut hello = wire::client_hello(b"x.test");
        hello[0] = 23; // application_data
        assert_eq!(sni_from_payload(&hello), None);
        let mut hello2 = wire::client_hello(b"x.test");
        hello2[5] = 2; // server_hello
        assert_eq!(sni_from_payload(&hello2), None);
        assert_eq!(sni_from_payload(&[]), None);
        assert_eq!(sni_from_payload(b"GET / HTTP/1.1\r\n"), None);
    }

    #[test]
    fn truncation_never_panics_and_yields_none() {
        let hello = wire::client_hello(b"severed.example.test");
        for cut in 0..hello.len() {
            assert_eq!(sni_from_payload(&hello[..cut]), None, "cut at {cut}");
        }
    }

    #[test]
    fn random_bytes_never_panic() {
        let mut rng = crate::util::substream(29, "sni/fuzz");
        for _ in 0..2000 {
            let n = rng.gen_range(0..300);
            let mut buf: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            let _ = sni_from_payload(&buf);
            // Same bytes forced through the record/handshake gates.
            if buf.len() > 5 {
                buf[0] = 22;
                buf[5] = 1;
                let _ = sni_from_payload(&buf);
            }
        }
    }
}
