//! Seed derivation, JSON float formatting, and atomic file writes shared
//! across modules.

use std::fs;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike the
/// std hasher, so derived seeds are part of the reproducibility contract.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a named substream seed from a root seed.
pub fn seed_for(root: u64, name: &str) -> u64 {
    root ^ fnv1a(name.as_bytes())
}

/// Seeded RNG for the named substream of a root seed.
pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_for(root, name))
}

/// JSON formatter that writes every f64 in scientific notation with a fixed
/// number of digits after the point. 16 digits (17 significant) round-trips
/// any finite f64 exactly.
struct SciFormatter {
    frac_digits: usize,
}

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.*e}", self.frac_digits, value)
    }
}

/// Serialize to JSON with floats at 17 significant digits (exact f64 round-trip).
pub fn to_json_f64_exact<T: Serialize>(value: &T) -> serde_json::Result<String> {
    to_json_sci(value, 16)
}

/// Serialize to JSON with floats at 9 significant digits.
pub fn to_json_f64_9sig<T: Serialize>(value: &T) -> serde_json::Result<String> {
    to_json_sci(value, 8)
}

fn to_json_sci<T: Serialize>(value: &T, frac_digits: usize) -> serde_json::Result<String> {
    let mut out = Vec::with_capacity(256);
    let mut ser =
        serde_json::Serializer::with_formatter(&mut out, SciFormatter { frac_digits });
    value.serialize(&mut ser)?;
    // SciFormatter only ever writes ASCII.
    Ok(String::from_utf8(out).expect("json output is utf-8"))
}

/// Write via a temp file in the same directory plus rename, so readers never
/// observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = path.file_name().ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, format!("not a file path: {}", path.display()))
    })?;
    let mut tmp_name = base.to_os_string();
    tmp_name.push(format!(".tmp.{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}
