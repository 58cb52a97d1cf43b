//! Stream-to-feature conversion: per-packet normalization followed by
//! exponential pooling down to a fixed 128-entry series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::PacketSample;

/// Packet sizes at or above this many bytes normalize to 1.
pub const SIZE_CAP: u32 = 2048;
/// Inter-packet gaps at or above this many seconds normalize to 1.
pub const DELAY_CAP_SECS: f64 = 1.0;
/// Every stream is clipped or padded to this many entries before pooling.
pub const SEQ_LEN: usize = 2048;
/// Pooling always yields this many entries.
pub const POOLED_LEN: usize = 128;
/// Dimension of each pooled entry.
pub const ENTRY_DIM: usize = 6;
/// Pooled entries come in 8 blocks of 16, one per time scale.
pub const BLOCKS: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("cannot featurize an empty stream")]
    EmptyStream,
    #[error("pooling requires exactly {SEQ_LEN} entries, got {0}")]
    BadLength(usize),
}

/// Per-packet feature vectors (√delay, sign, √size), all components in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub entries: Vec<[f64; 3]>,
}

/// The 128-entry pooled series. Each entry concatenates the elementwise max
/// and mean of one pooling window (or the entry and its predecessor for the
/// step-1 segment).
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSeries {
    pub entries: Vec<[f64; ENTRY_DIM]>,
    /// Scale block (0..8) of each entry; 16 entries per block.
    pub block_index: Vec<usize>,
}

/// Map packets to (√delay, sign, √size) vectors. Sizes cap at `size_cap`
/// bytes, gaps at `delay_cap_secs`; the first packet's delay is 0; sign is 1
/// for device-outgoing packets.
pub fn normalize(
    samples: &[PacketSample],
    size_cap: u32,
    delay_cap_secs: f64,
) -> Result<NormalizedSeries, PreprocessError> {
    assert!(size_cap > 0 && delay_cap_secs > 0.0);
    if samples.is_empty() {
        return Err(PreprocessError::EmptyStream);
    }
    let mut entries = Vec::with_capacity(samples.len());
    let mut prev_micros = None;
    for s in samples {
        let gap_secs = match prev_micros {
            None => 0.0,
            Some(prev) => s.ts_micros().saturating_sub(prev) as f64 / 1e6,
        };
        prev_micros = Some(s.ts_micros());
        let delay = gap_secs.min(delay_cap_secs) / delay_cap_secs;
        let size = s.size.min(size_cap) as f64 / size_cap as f64;
        let sign = if s.outgoing { 1.0 } else { 0.0 };
        entries.push([delay.sqrt(), sign, size.sqrt()]);
    }
    Ok(NormalizedSeries { entries })
}

/// Force the series to exactly [`SEQ_LEN`] entries: clip the tail or pad it
/// with zero vectors.
pub fn clip_pad(mut series: NormalizedSeries) -> NormalizedSeries {
    series.entries.resize(SEQ_LEN, [0.0; 3]);
    series
}

/// Window layout of the pooled series: (input start, window size) per scale
/// segment, each segment contributing outputs at one time scale.
const SEGMENTS: [(usize, usize); 7] = [
    (0, 1),    // [0, 32): entries kept as is, paired with their predecessor
    (32, 2),   // [32, 64)
    (64, 4),   // [64, 128)
    (128, 8),  // [128, 256)
    (256, 16), // [256, 512)
    (512, 32), // [512, 1024)
    (1024, 64),// [1024, 2048)
];

/// Pool a full-length series down to 128 six-dimensional entries. Early
/// entries keep single-packet resolution; later ones are max- and
/// mean-pooled over exponentially growing windows.
pub fn exp_pool(series: &NormalizedSeries) -> Result<PooledSeries, PreprocessError> {
    if series.entries.len() != SEQ_LEN {
        return Err(PreprocessError::BadLength(series.entries.len()));
    }
    let x = &series.entries;
    let mut entries = Vec::with_capacity(POOLED_LEN);
    for &(start, step) in &SEGMENTS {
        let end = if step == 1 { start + 32 } else { start + 16 * step };
        for window_start in (start..end).step_by(step) {
            let entry = if step == 1 {
                let cur = x[window_start];
                let prev = if window_start == 0 { [0.0; 3] } else { x[window_start - 1] };
                [cur[0], cur[1], cur[2], prev[0], prev[1], prev[2]]
            } else {
                let window = &x[window_start..window_start + step];
                let mut max = [f64::NEG_INFINITY; 3];
                let mut sum = [0.0; 3];
                for v in window {
                    for d in 0..3 {
                        max[d] = max[d].max(v[d]);
                        sum[d] += v[d];
                    }
                }
                let n = step as f64;
                [max[0], max[1], max[2], sum[0] / n, sum[1] / n, sum[2] / n]
            };
            entries.push(entry);
        }
    }
    debug_assert_eq!(entries.len(), POOLED_LEN);
    let block_index = (0..POOLED_LEN).map(|i| i / 16).collect();
    Ok(PooledSeries { entries, block_index })
}

/// Normalize, clip/pad, and pool in one step with the default caps.
pub fn featurize(samples: &[PacketSample]) -> Result<PooledSeries, PreprocessError> {
    exp_pool(&clip_pad(normalize(samples, SIZE_CAP, DELAY_CAP_SECS)?))
}

/// One line of the feature dump.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureDump {
    pub label_app: String,
    pub label_act: String,
    pub pooled: Vec<[f64; ENTRY_DIM]>,
}

/// Serialize feature dumps as JSON lines, floats at 9 significant digits.
pub fn write_feature_jsonl(dumps: &[FeatureDump]) -> String {
    let mut out = String::new();
    for d in dumps {
        out.push_str(&crate::util::to_json_f64_9sig(d).expect("feature line serializes"));
        out.push('\n');
    }
    out
}

pub fn read_feature_jsonl(text: &str) -> Result<Vec<FeatureDump>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
