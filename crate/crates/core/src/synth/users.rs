//! Synthetic user populations: trait labels drawn from configured
//! marginals, usage events drawn from trait-conditional mixtures over the
//! (app, activity) vocabulary.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::profiler::{default_vocab, ProfileEvent, TraitTruth, OTHER_EVENT};
use crate::util::substream;

use super::SynthError;

/// One trait: its label set and the marginal the labels are drawn from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraitSpec {
    pub name: String,
    pub labels: Vec<String>,
    pub marginal: Vec<f64>,
}

/// A population: traits plus per-trait-combination usage mixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationProfile {
    pub traits: Vec<TraitSpec>,
    /// Key = trait labels joined with '|' in trait order; value = mixture
    /// weights over [`default_vocab`] order.
    pub mixtures: BTreeMap<String, Vec<f64>>,
    pub users: usize,
}

fn check_weights(name: &str, w: &[f64], len: usize) -> Result<(), SynthError> {
    if w.len() != len {
        return Err(SynthError::BadConfig(format!(
            "{name}: expected {len} weights, got {}",
            w.len()
        )));
    }
    if w.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(SynthError::BadConfig(format!("{name}: weights outside [0, 1]")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SynthError::BadConfig(format!("{name}: weights sum to {sum}, not 1")));
    }
    Ok(())
}

impl PopulationProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.traits.is_empty() {
            return Err(SynthError::BadConfig("population needs at least one trait".into()));
        }
        for t in &self.traits {
            if t.labels.is_empty() {
                return Err(SynthError::BadConfig(format!("trait {}: empty label set", t.name)));
            }
            check_weights(&format!("trait {} marginal", t.name), &t.marginal, t.labels.len())?;
        }
        let vocab_len = default_vocab().len();
        for (combo, w) in &self.mixtures {
            check_weights(&format!("mixture {combo}"), w, vocab_len)?;
        }
        // Every reachable combination needs a mixture.
        let mut combos = vec![String::new()];
        for t in &self.traits {
            combos = combos
                .iter()
                .flat_map(|prefix| {
                    t.labels.iter().map(move |l| {
                        if prefix.is_empty() {
                            l.clone()
                        } else {
                            format!("{prefix}|{l}")
                        }
                    })
                })
                .collect();
        }
        for combo in &combos {
            if !self.mixtures.contains_key(combo) {
                return Err(SynthError::BadConfig(format!("no mixture for combination {combo}")));
            }
        }
        Ok(())
    }
}

fn draw_weighted(w: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    w.len() - 1
}

/// Total variation distance between two mixtures on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Draw the population: per-user trait labels from the marginals, then
/// `streams_per_user` events from the user's combination mixture.
///
/// Event timestamps are per-user sequential; user ids are "user{index}".
pub fn gen_users(
    population: &PopulationProfile,
    streams_per_user: usize,
    seed: u64,
) -> Result<(Vec<ProfileEvent>, TraitTruth), SynthError> {
    population.validate()?;
    let vocab = default_vocab();

    let per_user = crate::par::map_indices(population.users, |u| {
        let mut rng = substream(seed, &format!("synth/user/{u}"));
        let user = format!("user{u:04}");

        let mut labels = BTreeMap::new();
        let mut combo = String::new();
        for t in &population.traits {
            let l = &t.labels[draw_weighted(&t.marginal, &mut rng)];
            labels.insert(t.name.clone(), l.clone());
            if !combo.is_empty() {
                combo.push('|');
            }
            combo.push_str(l);
        }
        let mixture = &population.mixtures[&combo];

        let events: Vec<ProfileEvent> = (0..streams_per_user)
            .map(|i| {
                let key = &vocab[draw_weighted(mixture, &mut rng)];
                let (app, activity) = if key == OTHER_EVENT {
                    ("impertinent".to_string(), String::new())
                } else {
                    let (a, b) = key.split_once('/').expect("vocab keys are app/activity");
                    (a.to_string(), b.to_string())
                };
                ProfileEvent { user: user.clone(), ts: u as u64 * 1_000_000 + i as u64, app, activity }
            })
            .collect();
        (user, labels, events)
    });

    let mut all_events = Vec::new();
    let mut truth = TraitTruth::new();
    for (user, labels, events) in per_user {
        truth.insert(user, labels);
        all_events.extend(events);
    }
    Ok((all_events, truth))
}

/// Documented default population: one trait with three personas whose
/// usage mixtures are far apart in total variation.
pub fn default_population(users: usize) -> PopulationProfile {
    // Vocabulary order: fb/post_text, fb/post_image, yt/play_video,
    // yt/comment, wa/send_message, wa/send_image, gmail/mail, other.
    let mixtures = BTreeMap::from([
        ("messenger".to_string(), vec![0.05, 0.05, 0.05, 0.05, 0.35, 0.25, 0.05, 0.15]),
        ("streamer".to_string(), vec![0.05, 0.05, 0.40, 0.20, 0.05, 0.05, 0.05, 0.15]),
        ("poster".to_string(), vec![0.35, 0.25, 0.05, 0.05, 0.05, 0.05, 0.10, 0.10]),
    ]);
    PopulationProfile {
        traits: vec![TraitSpec {
            name: "persona".into(),
            labels: vec!["messenger".into(), "streamer".into(), "poster".into()],
            marginal: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        }],
        mixtures,
        users,
    }
}
