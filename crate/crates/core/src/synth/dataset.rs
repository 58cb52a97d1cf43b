//! Dataset generation: a Table-1-shaped collection of labeled streams as
//! one pcap plus a label sidecar and a hash manifest.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capture::{write_pcap, ExportStream, PacketRecord};
use crate::util::substream;

use super::stream::{gen_stream, StreamEnv};
use super::{ClassProfile, GapDist, LengthDist, SizeDist, SynthError};

/// Default per-class stream counts at scale 1.0.
pub const TABLE1: [(&str, Option<&str>, usize); 8] = [
    ("facebook", Some("post_text"), 237),
    ("facebook", Some("post_image"), 423),
    ("youtube", Some("play_video"), 102),
    ("youtube", Some("comment"), 129),
    ("whatsapp", Some("send_message"), 83),
    ("whatsapp", Some("send_image"), 203),
    ("gmail", Some("mail"), 81),
    ("impertinent", None, 7068),
];

/// One dataset class: a stream count and the profile mixture behind it.
/// Action classes have a single profile; the background class mixes
/// several.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamClass {
    /// Stream count at scale 1.0.
    pub count: usize,
    pub profiles: Vec<(ClassProfile, Ipv4Addr)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub device_ip: Ipv4Addr,
    pub resolver_ip: Ipv4Addr,
    /// Capture clock origin.
    pub base_micros: u64,
    /// Multiplies every class count, rounded to nearest.
    pub scale: f64,
    pub classes: Vec<StreamClass>,
}

fn lognormal(bytes: f64, sigma: f64) -> SizeDist {
    SizeDist { mu: bytes.ln(), sigma }
}

fn action(
    app: &str,
    activity: &str,
    hostname: &str,
    emit_sni: bool,
    mean_len: f64,
    out: SizeDist,
    inc: SizeDist,
    gap_rate: f64,
    stay: [f64; 2],
) -> ClassProfile {
    ClassProfile {
        app: app.into(),
        activity: Some(activity.into()),
        hostname: hostname.into(),
        emit_sni,
        length: LengthDist::Geometric { p: 1.0 / mean_len },
        size_out: out,
        size_in: inc,
        gap: GapDist::Exponential { rate: gap_rate },
        stay,
    }
}

fn background(
    hostname: &str,
    mean_len: f64,
    out: SizeDist,
    inc: SizeDist,
    gap_rate: f64,
    stay: [f64; 2],
) -> ClassProfile {
    ClassProfile {
        app: "impertinent".into(),
        activity: None,
        hostname: hostname.into(),
        emit_sni: true,
        length: LengthDist::Geometric { p: 1.0 / mean_len },
        size_out: out,
        size_in: inc,
        gap: GapDist::Exponential { rate: gap_rate },
        stay,
    }
}

/// Documented default: Table 1 counts over well-separated class profiles.
/// Each application owns an inbound size band with clear margin to its
/// neighbors: whatsapp never receives more than ~170 bytes, facebook
/// replies sit near 430, gmail near 800, youtube at or above 1300. All
/// four background profiles share a thin-client mark (outbound near 60
/// bytes, under a quarter of every application's outbound mean) and
/// spread across pacing and length, so background is recognized by the
/// mark and applications by their band. Activities within an application
/// differ in outbound size, pacing, and stream length instead, keeping
/// the application signature coherent. The whatsapp classes suppress SNI
/// to exercise DNS-only labeling.
pub fn default_config(scale: f64) -> DatasetConfig {
    let ip = |d: u8| Ipv4Addr::new(203, 0, 113, d);
    let bg_ip = |d: u8| Ipv4Addr::new(198, 51, 100, d);
    let classes = vec![
        StreamClass {
            count: TABLE1[0].2,
            profiles: vec![(
                action(
                    "facebook",
                    "post_text",
                    "edge-star.facebook.test",
                    true,
                    16.0,
                    lognormal(260.0, 0.12),
                    lognormal(430.0, 0.10),
                    25.0,
                    [0.6, 0.4],
                ),
                ip(11),
            )],
        },
        StreamClass {
            count: TABLE1[1].2,
            profiles: vec![(
                action(
                    "facebook",
                    "post_image",
                    "edge-star.facebook.test",
                    true,
                    48.0,
                    lognormal(1250.0, 0.08),
                    lognormal(430.0, 0.10),
                    120.0,
                    [0.9, 0.25],
                ),
                ip(11),
            )],
        },
        StreamClass {
            count: TABLE1[2].2,
            profiles: vec![(
                action(
                    "youtube",
                    "play_video",
                    "r4.googlevideo.test",
                    true,
                    90.0,
                    lognormal(220.0, 0.10),
                    lognormal(1450.0, 0.05),
                    300.0,
                    [0.15, 0.95],
                ),
                ip(12),
            )],
        },
        StreamClass {
            count: TABLE1[3].2,
            profiles: vec![(
                action(
                    "youtube",
                    "comment",
                    "r4.googlevideo.test",
                    true,
                    12.0,
                    lognormal(320.0, 0.10),
                    lognormal(1300.0, 0.06),
                    8.0,
                    [0.35, 0.55],
                ),
                ip(12),
            )],
        },
        StreamClass {
            count: TABLE1[4].2,
            profiles: vec![(
                action(
                    "whatsapp",
                    "send_message",
                    "e3.whatsapp.test",
                    false,
                    14.0,
                    lognormal(260.0, 0.10),
                    lognormal(140.0, 0.12),
                    3.0,
                    [0.4, 0.3],
                ),
                ip(13),
            )],
        },
        StreamClass {
            count: TABLE1[5].2,
            profiles: vec![(
                action(
                    "whatsapp",
                    "send_image",
                    "e3.whatsapp.test",
                    false,
                    30.0,
                    lognormal(820.0, 0.10),
                    lognormal(170.0, 0.12),
                    60.0,
                    [0.85, 0.3],
                ),
                ip(13),
            )],
        },
        StreamClass {
            count: TABLE1[6].2,
            profiles: vec![(
                action(
                    "gmail",
                    "mail",
                    "imap.gmail.test",
                    true,
                    18.0,
                    lognormal(620.0, 0.10),
                    lognormal(800.0, 0.10),
                    15.0,
                    [0.62, 0.6],
                ),
                ip(14),
            )],
        },
        StreamClass {
            count: TABLE1[7].2,
            profiles: vec![
                (
                    background(
                        "cdn.assets.test",
                        60.0,
                        lognormal(60.0, 0.10),
                        lognormal(700.0, 0.10),
                        200.0,
                        [0.15, 0.88],
                    ),
                    bg_ip(21),
                ),
                (
                    background(
                        "www.newsfeed.test",
                        22.0,
                        lognormal(60.0, 0.10),
                        lognormal(330.0, 0.12),
                        35.0,
                        [0.3, 0.7],
                    ),
                    bg_ip(22),
                ),
                (
                    background(
                        "api.telemetry.test",
                        6.0,
                        lognormal(60.0, 0.10),
                        lognormal(200.0, 0.12),
                        1.5,
                        [0.8, 0.2],
                    ),
                    bg_ip(23),
                ),
                (
                    background(
                        "sync.drive.test",
                        40.0,
                        lognormal(60.0, 0.10),
                        lognormal(560.0, 0.10),
                        90.0,
                        [0.6, 0.7],
                    ),
                    bg_ip(24),
                ),
            ],
        },
    ];
    DatasetConfig {
        device_ip: Ipv4Addr::new(10, 0, 0, 2),
        resolver_ip: Ipv4Addr::new(198, 51, 100, 53),
        base_micros: 1_700_000_000_000_000,
        scale,
        classes,
    }
}

/// Scaled stream count per (app, activity) class, in config order.
pub fn class_counts(config: &DatasetConfig) -> Vec<(String, Option<String>, usize)> {
    config
        .classes
        .iter()
        .map(|c| {
            let p = &c.profiles[0].0;
            (
                p.app.clone(),
                p.activity.clone(),
                (c.count as f64 * config.scale).round() as usize,
            )
        })
        .collect()
}

/// One sidecar line: ground truth for one generated stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub pcap: String,
    pub flow_key: String,
    pub app: String,
    pub activity: Option<String>,
}

/// In-memory dataset, ready to be written out.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub pcap: Vec<u8>,
    pub labels_jsonl: String,
    pub manifest_json: String,
}

impl DatasetFiles {
    pub const PCAP_NAME: &'static str = "traffic.pcap";
    pub const LABELS_NAME: &'static str = "labels.jsonl";
    pub const MANIFEST_NAME: &'static str = "manifest.json";
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    scale: f64,
    streams: usize,
    files: BTreeMap<&'a str, String>,
}

/// Lowest client ephemeral port; each stream takes the next one.
const FIRST_CLIENT_PORT: u16 = 2048;

/// Generate the full dataset: every stream of every class, interleaved by
/// timestamp into one pcap, with the label sidecar and a sha256 manifest.
pub fn gen_dataset(config: &DatasetConfig, seed: u64) -> Result<DatasetFiles, SynthError> {
    for class in &config.classes {
        if class.profiles.is_empty() {
            return Err(SynthError::BadConfig("class with no profiles".into()));
        }
        for (p, _) in &class.profiles {
            p.validate()?;
        }
    }
    if !(config.scale >= 0.0 && config.scale.is_finite()) {
        return Err(SynthError::BadConfig(format!("scale {} out of range", config.scale)));
    }

    // Flat plan: one entry per stream, in class order.
    let mut plan: Vec<usize> = Vec::new();
    for (ci, class) in config.classes.iter().enumerate() {
        let n = (class.count as f64 * config.scale).round() as usize;
        plan.extend(std::iter::repeat(ci).take(n));
    }
    if plan.len() > (u16::MAX - FIRST_CLIENT_PORT) as usize {
        return Err(SynthError::BadConfig(format!(
            "{} streams exceed the client port space; lower the scale",
            plan.len()
        )));
    }

    let generated = crate::par::map_indices(plan.len(), |g| {
        let class = &config.classes[plan[g]];
        let mut rng = substream(seed, &format!("synth/stream/{g}"));
        let pick = if class.profiles.len() > 1 {
            rng.gen_range(0..class.profiles.len())
        } else {
            0
        };
        let (profile, server_ip) = &class.profiles[pick];
        let env = StreamEnv {
            device_ip: config.device_ip,
            server_ip: *server_ip,
            resolver_ip: config.resolver_ip,
            client_port: FIRST_CLIENT_PORT + g as u16,
            dns_ident: g as u16,
            start_micros: config.base_micros + g as u64 * 40_000,
        };
        gen_stream(profile, &env, &mut rng)
    });

    let mut records: Vec<PacketRecord> = Vec::new();
    let mut labels = String::new();
    for s in &generated {
        records.extend(s.records.iter().cloned());
        let row = LabelRow {
            pcap: DatasetFiles::PCAP_NAME.to_string(),
            flow_key: s.flow_key.clone(),
            app: s.app.clone(),
            activity: s.activity.clone(),
        };
        labels.push_str(&serde_json::to_string(&row).expect("label row serializes"));
        labels.push('\n');
    }
    // Stable sort: equal timestamps keep plan order.
    records.sort_by_key(|p| p.ts_micros());
    let pcap = write_pcap(&records);

    let manifest = Manifest {
        seed,
        scale: config.scale,
        streams: generated.len(),
        files: BTreeMap::from([
            (DatasetFiles::PCAP_NAME, sha256_hex(&pcap)),
            (DatasetFiles::LABELS_NAME, sha256_hex(labels.as_bytes())),
        ]),
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    Ok(DatasetFiles { pcap, labels_jsonl: labels, manifest_json })
}

/// Parse a sidecar document.
pub fn read_labels_jsonl(text: &str) -> Result<Vec<LabelRow>, SynthError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| SynthError::BadConfig(format!("bad label line: {e}")))
        })
        .collect()
}

/// Join sidecar labels onto exported streams by flow key. Returns how many
/// streams matched a row.
pub fn apply_labels(streams: &mut [ExportStream], rows: &[LabelRow]) -> usize {
    let by_key: BTreeMap<&str, &LabelRow> =
        rows.iter().map(|r| (r.flow_key.as_str(), r)).collect();
    let mut matched = 0;
    for s in streams {
        if let Some(row) = by_key.get(s.key.as_str()) {
            s.app_label = Some(row.app.clone());
            s.activity_label = row.activity.clone();
            matched += 1;
        }
    }
    matched
}
