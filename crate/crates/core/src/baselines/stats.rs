//! Mergeable per-stream packet-size statistics. Keeping n, sum, and the sum
//! of squares per direction lets stats of merged streams be computed without
//! revisiting packets, so cluster-level features cost O(1) per merge.

use serde::{Deserialize, Serialize};

use crate::capture::PacketSample;

/// Moments of one size series. `min`/`max` are `None` while the series is
/// empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesStats {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl SeriesStats {
    pub fn push(&mut self, size: u32) {
        let s = size as f64;
        self.n += 1;
        self.sum += s;
        self.sum_sq += s * s;
        self.min = Some(self.min.map_or(s, |m| m.min(s)));
        self.max = Some(self.max.map_or(s, |m| m.max(s)));
    }

    pub fn merge(&self, other: &SeriesStats) -> SeriesStats {
        SeriesStats {
            n: self.n + other.n,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            min: merge_opt(self.min, other.min, f64::min),
            max: merge_opt(self.max, other.max, f64::max),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Population variance, floored at zero against rounding.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mean = self.mean();
        (self.sum_sq / self.n as f64 - mean * mean).max(0.0)
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

fn merge_opt(a: Option<f64>, b: Option<f64>, f: impl Fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(f(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Size statistics of one stream: the whole series and its directional
/// halves.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowStats {
    pub full: SeriesStats,
    pub incoming: SeriesStats,
    pub outgoing: SeriesStats,
}

pub fn compute_stats(samples: &[PacketSample]) -> FlowStats {
    let mut stats = FlowStats::default();
    for s in samples {
        stats.full.push(s.size);
        if s.outgoing {
            stats.outgoing.push(s.size);
        } else {
            stats.incoming.push(s.size);
        }
    }
    stats
}

pub fn merge_stats(a: &FlowStats, b: &FlowStats) -> FlowStats {
    FlowStats {
        full: a.full.merge(&b.full),
        incoming: a.incoming.merge(&b.incoming),
        outgoing: a.outgoing.merge(&b.outgoing),
    }
}

pub const FEATURE_DIM: usize = 15;

/// Feature block order, recorded alongside serialized baseline models.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "full_mean",
    "full_std",
    "full_min",
    "full_max",
    "full_n",
    "incoming_mean",
    "incoming_std",
    "incoming_min",
    "incoming_max",
    "incoming_n",
    "outgoing_mean",
    "outgoing_std",
    "outgoing_min",
    "outgoing_max",
    "outgoing_n",
];

/// Flatten stats into the fixed 15-vector; empty series contribute zeros.
pub fn stats_to_features(stats: &FlowStats) -> [f64; FEATURE_DIM] {
    let mut out = [0.0; FEATURE_DIM];
    for (block, series) in [stats.full, stats.incoming, stats.outgoing].iter().enumerate() {
        let o = block * 5;
        out[o] = series.mean();
        out[o + 1] = series.std();
        out[o + 2] = series.min.unwrap_or(0.0);
        out[o + 3] = series.max.unwrap_or(0.0);
        out[o + 4] = series.n as f64;
    }
    out
}
