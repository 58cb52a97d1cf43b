//! Deterministic synthetic traffic: per-class generative stream models,
//! Table-1-shaped pcap datasets with label sidecars, and synthetic user
//! populations with trait-dependent usage mixtures.
//!
//! Distribution families are chosen for closed-form moments (log-normal
//! sizes, exponential gaps, two-state Markov directions) so statistical
//! checks against the generator are exact. Realism is a non-goal.

pub mod dataset;
pub mod stream;
pub mod users;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    apply_labels, class_counts, default_config, gen_dataset, sha256_hex, DatasetConfig,
    DatasetFiles, LabelRow, StreamClass, TABLE1,
};
pub use stream::{gen_stream, GenStream, StreamEnv};
pub use users::{default_population, gen_users, total_variation, PopulationProfile, TraitSpec};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad generator config: {0}")]
    BadConfig(String),
}

/// Number of data packets in a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthDist {
    /// Support {1, 2, ...} with success probability `p`; mean 1/p.
    Geometric { p: f64 },
    Constant { n: u64 },
}

impl LengthDist {
    pub fn draw(&self, rng: &mut impl Rng) -> u64 {
        match *self {
            LengthDist::Constant { n } => n,
            LengthDist::Geometric { p } => {
                if p >= 1.0 {
                    return 1;
                }
                // Inverse CDF; u in [0, 1) keeps ln finite.
                let u: f64 = rng.gen();
                1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
            }
        }
    }

    fn validate(&self, class: &str) -> Result<(), SynthError> {
        match *self {
            LengthDist::Geometric { p } if !(p > 0.0 && p <= 1.0) => Err(SynthError::BadConfig(
                format!("{class}: geometric p must be in (0, 1], got {p}"),
            )),
            LengthDist::Constant { n: 0 } => {
                Err(SynthError::BadConfig(format!("{class}: constant length must be >= 1")))
            }
            _ => Ok(()),
        }
    }
}

/// Log-normal packet size in bytes, capped at 1514. `sigma = 0` degenerates
/// to a constant `round(exp(mu))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDist {
    /// Mean of log size in log-bytes.
    pub mu: f64,
    /// Standard deviation of log size; >= 0.
    pub sigma: f64,
}

/// Hard cap on drawn packet sizes.
pub const SIZE_CAP_BYTES: u32 = 1514;

impl SizeDist {
    pub fn draw(&self, rng: &mut impl Rng) -> u32 {
        let log_size = if self.sigma == 0.0 {
            self.mu
        } else {
            Normal::new(self.mu, self.sigma).expect("validated sigma").sample(rng)
        };
        (log_size.exp().round() as u32).clamp(1, SIZE_CAP_BYTES)
    }

    /// Closed-form mean of the uncapped distribution: exp(mu + sigma^2/2).
    pub fn uncapped_mean(&self) -> f64 {
        (self.mu + self.sigma * self.sigma / 2.0).exp()
    }

    fn validate(&self, class: &str) -> Result<(), SynthError> {
        if !(self.sigma >= 0.0) || !self.mu.is_finite() {
            return Err(SynthError::BadConfig(format!(
                "{class}: log-normal needs finite mu and sigma >= 0"
            )));
        }
        Ok(())
    }
}

/// Inter-arrival gap between consecutive packets of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapDist {
    /// Exponential with `rate` events per second; mean gap 1/rate.
    Exponential { rate: f64 },
    Constant { secs: f64 },
}

impl GapDist {
    /// Strictly positive gap in whole microseconds.
    pub fn draw_micros(&self, rng: &mut impl Rng) -> u64 {
        let secs = match *self {
            GapDist::Constant { secs } => secs,
            GapDist::Exponential { rate } => {
                Exp::new(rate).expect("validated rate").sample(rng)
            }
        };
        ((secs * 1e6).round() as u64).max(1)
    }

    fn validate(&self, class: &str) -> Result<(), SynthError> {
        match *self {
            GapDist::Exponential { rate } if !(rate > 0.0) => {
                Err(SynthError::BadConfig(format!("{class}: exponential rate must be > 0")))
            }
            GapDist::Constant { secs } if !(secs >= 0.0) => {
                Err(SynthError::BadConfig(format!("{class}: constant gap must be >= 0")))
            }
            _ => Ok(()),
        }
    }
}

/// Generative model of one (app, activity) stream class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub app: String,
    /// None for background traffic.
    pub activity: Option<String>,
    /// Name emitted in DNS and, when `emit_sni`, in the ClientHello.
    pub hostname: String,
    /// False exercises the DNS-only labeling path (the ClientHello is
    /// still sent, without a server_name extension).
    pub emit_sni: bool,
    pub length: LengthDist,
    pub size_out: SizeDist,
    pub size_in: SizeDist,
    pub gap: GapDist,
    /// Two-state direction chain: [P(out stays out), P(in stays in)].
    /// The first data packet is always outgoing.
    pub stay: [f64; 2],
}

impl ClassProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let class = format!("{}/{}", self.app, self.activity.as_deref().unwrap_or("-"));
        if self.hostname.is_empty() {
            return Err(SynthError::BadConfig(format!("{class}: empty hostname")));
        }
        self.length.validate(&class)?;
        self.size_out.validate(&class)?;
        self.size_in.validate(&class)?;
        self.gap.validate(&class)?;
        for p in self.stay {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::BadConfig(format!(
                    "{class}: stay probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::substream;

    #[test]
    fn geometric_length_mean_matches_one_over_p() {
        let mut rng = substream(3, "synth/geom");
        let dist = LengthDist::Geometric { p: 0.1 };
        let n = 20_000;
        let mean = (0..n).map(|_| dist.draw(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 10.0).abs() < 0.3, "mean {mean}");
        assert_eq!(LengthDist::Geometric { p: 1.0 }.draw(&mut rng), 1);
        assert_eq!(LengthDist::Constant { n: 7 }.draw(&mut rng), 7);
    }

    #[test]
    fn lognormal_empirical_mean_matches_closed_form_within_two_percent() {
        let mut rng = substream(4, "synth/lognormal");
        let dist = SizeDist { mu: 6.0, sigma: 0.4 };
        let n = 10_000;
        let mean = (0..n).map(|_| dist.draw(&mut rng) as f64).sum::<f64>() / n as f64;
        let expected = dist.uncapped_mean();
        assert!(expected < 600.0, "cap must stay irrelevant for this check");
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "empirical {mean} vs closed form {expected}"
        );
    }

    #[test]
    fn zero_sigma_size_is_constant() {
        let mut rng = substream(5, "synth/const");
        let dist = SizeDist { mu: 100.0f64.ln(), sigma: 0.0 };
        for _ in 0..100 {
            assert_eq!(dist.draw(&mut rng), 100);
        }
    }

    #[test]
    fn sizes_are_capped() {
        let mut rng = substream(6, "synth/cap");
        let dist = SizeDist { mu: 9.0, sigma: 1.0 };
        for _ in 0..1000 {
            let s = dist.draw(&mut rng);
            assert!((1..=SIZE_CAP_BYTES).contains(&s));
        }
    }

    #[test]
    fn gaps_are_strictly_positive_micros() {
        let mut rng = substream(7, "synth/gap");
        let g = GapDist::Exponential { rate: 1e9 };
        for _ in 0..1000 {
            assert!(g.draw_micros(&mut rng) >= 1);
        }
        assert_eq!(GapDist::Constant { secs: 0.01 }.draw_micros(&mut rng), 10_000);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let mut p = ClassProfile {
            app: "facebook".into(),
            activity: Some("post_text".into()),
            hostname: "h.example".into(),
            emit_sni: true,
            length: LengthDist::Geometric { p: 0.1 },
            size_out: SizeDist { mu: 6.0, sigma: 0.3 },
            size_in: SizeDist { mu: 6.0, sigma: 0.3 },
            gap: GapDist::Exponential { rate: 20.0 },
            stay: [0.5, 0.5],
        };
        assert!(p.validate().is_ok());
        p.stay = [1.5, 0.5];
        assert!(p.validate().is_err());
        p.stay = [0.5, 0.5];
        p.size_out.sigma = -0.1;
        assert!(p.validate().is_err());
        p.size_out.sigma = 0.3;
        p.length = LengthDist::Geometric { p: 0.0 };
        assert!(p.validate().is_err());
    }
}
