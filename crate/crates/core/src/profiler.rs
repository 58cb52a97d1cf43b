//! Per-user long-term (app, activity) histories and multinomial naive
//! Bayes trait classification over them.
//!
//! The profile database is an append-only event log plus a compacted
//! snapshot; replaying the log reconstructs the snapshot exactly, and a
//! user's record depends only on the multiset of their events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Known (app, activity) event keys. Everything else lands in
/// [`OTHER_EVENT`].
pub const EVENT_VOCAB: [&str; 7] = [
    "facebook/post_text",
    "facebook/post_image",
    "youtube/play_video",
    "youtube/comment",
    "whatsapp/send_message",
    "whatsapp/send_image",
    "gmail/mail",
];

/// Bucket for unknown apps, unknown activities, and mismatched pairs.
pub const OTHER_EVENT: &str = "other";

/// Full event vocabulary as used for NB features: known keys plus the
/// `other` bucket.
pub fn default_vocab() -> Vec<String> {
    EVENT_VOCAB
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once(OTHER_EVENT.to_string()))
        .collect()
}

/// Canonical counts key for an observed (app, activity) pair.
pub fn event_key(app: &str, activity: &str) -> String {
    let key = format!("{app}/{activity}");
    if EVENT_VOCAB.contains(&key.as_str()) {
        key
    } else {
        OTHER_EVENT.to_string()
    }
}

#[derive(Debug, Error)]
pub enum ProfilerError {
    #[error("no training profiles for label {0}")]
    EmptyTraining(String),
    #[error("bad event log line {line}: {reason}")]
    BadEventLine { line: usize, reason: String },
}

/// One labeled stream observation for one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEvent {
    pub user: String,
    pub ts: u64,
    pub app: String,
    pub activity: String,
}

/// A user's accumulated event counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub user_id: String,
    /// Event key (see [`event_key`]) to count.
    pub counts: BTreeMap<String, u64>,
    /// Always equals the sum of `counts`.
    pub total_streams: u64,
    /// Largest event timestamp seen, so the record is independent of
    /// event order.
    pub last_updated: u64,
}

impl ProfileRecord {
    pub fn new(user_id: &str) -> Self {
        ProfileRecord {
            user_id: user_id.to_string(),
            counts: BTreeMap::new(),
            total_streams: 0,
            last_updated: 0,
        }
    }
}

/// All user records, keyed by user id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileDb {
    pub users: BTreeMap<String, ProfileRecord>,
}

impl ProfileDb {
    /// Count one labeled stream for `user_id` and return the updated
    /// record.
    pub fn update_profile(
        &mut self,
        user_id: &str,
        ts: u64,
        app: &str,
        activity: &str,
    ) -> &ProfileRecord {
        let record = self
            .users
            .entry(user_id.to_string())
            .or_insert_with(|| ProfileRecord::new(user_id));
        *record.counts.entry(event_key(app, activity)).or_insert(0) += 1;
        record.total_streams += 1;
        record.last_updated = record.last_updated.max(ts);
        record
    }

    /// Apply a batch of events.
    pub fn replay(&mut self, events: &[ProfileEvent]) {
        for e in events {
            self.update_profile(&e.user, e.ts, &e.app, &e.activity);
        }
    }

    pub fn to_snapshot_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile db serializes")
    }

    pub fn from_snapshot_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Serialize events as JSON lines.
pub fn write_events_jsonl(events: &[ProfileEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}

/// Parse a JSONL event log, reporting the first malformed line.
pub fn read_events_jsonl(s: &str) -> Result<Vec<ProfileEvent>, ProfilerError> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ProfilerError::BadEventLine {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Multinomial naive Bayes model for one trait.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraitModel {
    pub trait_name: String,
    pub labels: Vec<String>,
    /// log of the label frequency among training profiles.
    pub log_prior: Vec<f64>,
    /// Event vocabulary the conditionals index into.
    pub vocab: Vec<String>,
    /// log_cond[label][event] = log (α + count) / (α·V + total).
    pub log_cond: Vec<Vec<f64>>,
    pub alpha: f64,
}

/// Train one trait's NB model from labeled profiles.
///
/// Every label in `labels` must appear among the profiles; conditionals
/// use Laplace smoothing with `alpha` over `vocab`.
pub fn nb_train(
    trait_name: &str,
    labels: &[String],
    profiles: &[(ProfileRecord, String)],
    vocab: &[String],
    alpha: f64,
) -> Result<TraitModel, ProfilerError> {
    assert!(alpha > 0.0, "laplace smoothing needs alpha > 0");
    if profiles.is_empty() {
        return Err(ProfilerError::EmptyTraining(trait_name.to_string()));
    }
    let v = vocab.len();
    let other = vocab_index(vocab, OTHER_EVENT);

    let mut n_label = vec![0u64; labels.len()];
    let mut event_counts = vec![vec![0u64; v]; labels.len()];
    for (record, label) in profiles {
        let Some(l) = labels.iter().position(|x| x == label) else {
            return Err(ProfilerError::EmptyTraining(format!(
                "{trait_name}: profile label {label} not in the configured set"
            )));
        };
        n_label[l] += 1;
        for (key, &count) in &record.counts {
            let idx = vocab.iter().position(|x| x == key).or(other);
            if let Some(idx) = idx {
                event_counts[l][idx] += count;
            }
        }
    }
    if let Some(l) = n_label.iter().position(|&n| n == 0) {
        return Err(ProfilerError::EmptyTraining(format!("{trait_name}/{}", labels[l])));
    }

    let n_total = profiles.len() as f64;
    let log_prior = n_label.iter().map(|&n| (n as f64 / n_total).ln()).collect();
    let log_cond = event_counts
        .iter()
        .map(|counts| {
            let total: u64 = counts.iter().sum();
            let denom = alpha * v as f64 + total as f64;
            counts.iter().map(|&c| ((alpha + c as f64) / denom).ln()).collect()
        })
        .collect();

    Ok(TraitModel {
        trait_name: trait_name.to_string(),
        labels: labels.to_vec(),
        log_prior,
        vocab: vocab.to_vec(),
        log_cond,
        alpha,
    })
}

fn vocab_index(vocab: &[String], key: &str) -> Option<usize> {
    vocab.iter().position(|x| x == key)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior over `model.labels` for one record, by log-space Bayes rule.
///
/// Events missing from the model vocabulary score through the `other`
/// bucket; an empty record returns the prior.
pub fn nb_predict(model: &TraitModel, record: &ProfileRecord) -> Vec<f64> {
    let other = vocab_index(&model.vocab, OTHER_EVENT);
    let scores: Vec<f64> = model
        .labels
        .iter()
        .enumerate()
        .map(|(l, _)| {
            let mut s = model.log_prior[l];
            for (key, &count) in &record.counts {
                let idx = vocab_index(&model.vocab, key).or(other);
                if let Some(idx) = idx {
                    s += count as f64 * model.log_cond[l][idx];
                }
            }
            s
        })
        .collect();
    let lse = log_sum_exp(&scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// Trait name to label set, as read from the trait config file.
pub type TraitConfig = BTreeMap<String, Vec<String>>;

/// User id to (trait name to label), the training ground truth.
pub type TraitTruth = BTreeMap<String, BTreeMap<String, String>>;

/// Train one model per configured trait from the db plus ground truth.
/// Users absent from the truth file are skipped for that trait.
pub fn nb_train_all(
    db: &ProfileDb,
    config: &TraitConfig,
    truth: &TraitTruth,
    alpha: f64,
) -> Result<BTreeMap<String, TraitModel>, ProfilerError> {
    let vocab = default_vocab();
    let mut models = BTreeMap::new();
    for (trait_name, labels) in config {
        let profiles: Vec<(ProfileRecord, String)> = db
            .users
            .values()
            .filter_map(|r| {
                truth
                    .get(&r.user_id)
                    .and_then(|t| t.get(trait_name))
                    .map(|label| (r.clone(), label.clone()))
            })
            .collect();
        models.insert(
            trait_name.clone(),
            nb_train(trait_name, labels, &profiles, &vocab, alpha)?,
        );
    }
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::substream;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn record(user: &str, counts: &[(&str, u64)]) -> ProfileRecord {
        let mut r = ProfileRecord::new(user);
        for &(k, c) in counts {
            r.counts.insert(k.to_string(), c);
            r.total_streams += c;
        }
        r
    }

    #[test]
    fn fresh_user_single_event_counts_once() {
        let mut db = ProfileDb::default();
        let r = db.update_profile("alice", 17, "facebook", "post_text");
        assert_eq!(r.total_streams, 1);
        assert_eq!(r.counts["facebook/post_text"], 1);
        assert_eq!(r.last_updated, 17);
    }

    #[test]
    fn n_updates_give_total_n() {
        let mut db = ProfileDb::default();
        for i in 0..25u64 {
            db.update_profile("bob", i, "youtube", "comment");
        }
        let r = &db.users["bob"];
        assert_eq!(r.total_streams, 25);
        assert_eq!(r.counts.values().sum::<u64>(), r.total_streams);
    }

    #[test]
    fn unknown_events_land_in_the_other_bucket() {
        let mut db = ProfileDb::default();
        db.update_profile("u", 1, "impertinent", "");
        db.update_profile("u", 2, "facebook", "play_video");
        db.update_profile("u", 3, "telegram", "send_message");
        let r = &db.users["u"];
        assert_eq!(r.counts.len(), 1);
        assert_eq!(r.counts[OTHER_EVENT], 3);
    }

    #[test]
    fn replay_is_invariant_to_cross_user_interleaving() {
        let mut rng = substream(21, "profiler/perm");
        let mut events = Vec::new();
        for u in 0..4 {
            for i in 0..30u64 {
                let key = EVENT_VOCAB[rng.gen_range(0..EVENT_VOCAB.len())];
                let (app, activity) = key.split_once('/').unwrap();
                events.push(ProfileEvent {
                    user: format!("user{u}"),
                    ts: i,
                    app: app.to_string(),
                    activity: activity.to_string(),
                });
            }
        }
        let mut reference = ProfileDb::default();
        reference.replay(&events);
        for _ in 0..5 {
            events.shuffle(&mut rng);
            let mut db = ProfileDb::default();
            db.replay(&events);
            assert_eq!(db, reference);
            assert_eq!(db.to_snapshot_json(), reference.to_snapshot_json());
        }
    }

    #[test]
    fn event_log_and_snapshot_round_trip() {
        let events = vec![
            ProfileEvent { user: "a".into(), ts: 5, app: "gmail".into(), activity: "mail".into() },
            ProfileEvent {
                user: "b".into(),
                ts: 9,
                app: "whatsapp".into(),
                activity: "send_image".into(),
            },
        ];
        let log = write_events_jsonl(&events);
        assert_eq!(read_events_jsonl(&log).unwrap(), events);
        let err = read_events_jsonl("{\"user\": \"a\"}").unwrap_err();
        assert!(matches!(err, ProfilerError::BadEventLine { line: 1, .. }));

        let mut db = ProfileDb::default();
        db.replay(&events);
        let back = ProfileDb::from_snapshot_json(&db.to_snapshot_json()).unwrap();
        assert_eq!(back, db);
    }

    #[test]
    fn single_label_training_always_predicts_it() {
        let labels = vec!["student".to_string()];
        let profiles = vec![
            (record("a", &[("gmail/mail", 3)]), "student".to_string()),
            (record("b", &[("youtube/play_video", 7)]), "student".to_string()),
        ];
        let model = nb_train("profession", &labels, &profiles, &default_vocab(), 1.0).unwrap();
        assert_eq!(model.log_prior, vec![0.0]);
        let post = nb_predict(&model, &record("q", &[("facebook/post_text", 4)]));
        assert_eq!(post, vec![1.0]);
    }

    #[test]
    fn mirrored_counts_give_an_even_posterior_on_a_balanced_query() {
        let labels = vec!["l0".to_string(), "l1".to_string()];
        let profiles = vec![
            (record("a", &[("gmail/mail", 6), ("youtube/comment", 2)]), "l0".to_string()),
            (record("b", &[("gmail/mail", 2), ("youtube/comment", 6)]), "l1".to_string()),
        ];
        let model = nb_train("t", &labels, &profiles, &default_vocab(), 1.0).unwrap();
        let post = nb_predict(&model, &record("q", &[("gmail/mail", 3), ("youtube/comment", 3)]));
        assert!((post[0] - 0.5).abs() < 1e-12, "{post:?}");
        assert!((post[1] - 0.5).abs() < 1e-12, "{post:?}");
    }

    /// Three training users, two labels, checked against Bayes rule done
    /// in plain probability space.
    #[test]
    fn three_user_toy_matches_direct_enumeration() {
        let labels = vec!["casual".to_string(), "heavy".to_string()];
        let profiles = vec![
            (record("u1", &[("facebook/post_text", 2), ("gmail/mail", 1)]), "casual".to_string()),
            (record("u2", &[("youtube/play_video", 4)]), "casual".to_string()),
            (
                record("u3", &[("whatsapp/send_message", 5), ("whatsapp/send_image", 3)]),
                "heavy".to_string(),
            ),
        ];
        let vocab = default_vocab();
        let alpha = 1.0;
        let model = nb_train("usage", &labels, &profiles, &vocab, alpha).unwrap();

        let query = record("q", &[("whatsapp/send_message", 2), ("facebook/post_text", 1)]);

        // Direct enumeration: priors and smoothed conditionals multiplied
        // out per label, no logs anywhere.
        let v = vocab.len() as f64;
        let mut per_label = Vec::new();
        for label in &labels {
            let members: Vec<&ProfileRecord> = profiles
                .iter()
                .filter(|(_, l)| l == label)
                .map(|(r, _)| r)
                .collect();
            let prior = members.len() as f64 / profiles.len() as f64;
            let total: u64 =
                members.iter().map(|r| r.counts.values().sum::<u64>()).sum();
            let count_of = |key: &str| -> u64 {
                members.iter().map(|r| r.counts.get(key).copied().unwrap_or(0)).sum()
            };
            let mut likelihood = 1.0;
            for (key, &c) in &query.counts {
                let p = (alpha + count_of(key) as f64) / (alpha * v + total as f64);
                likelihood *= p.powi(c as i32);
            }
            per_label.push(prior * likelihood);
        }
        let z: f64 = per_label.iter().sum();
        let expected: Vec<f64> = per_label.iter().map(|p| p / z).collect();

        let post = nb_predict(&model, &query);
        for (a, b) in post.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{post:?} vs {expected:?}");
        }
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(post.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn empty_record_returns_the_prior() {
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let profiles = vec![
            (record("1", &[("gmail/mail", 1)]), "a".to_string()),
            (record("2", &[("gmail/mail", 1)]), "a".to_string()),
            (record("3", &[("gmail/mail", 1)]), "b".to_string()),
            (record("4", &[("gmail/mail", 1)]), "c".to_string()),
        ];
        let model = nb_train("t", &labels, &profiles, &default_vocab(), 1.0).unwrap();
        let post = nb_predict(&model, &ProfileRecord::new("empty"));
        let expected = [0.5, 0.25, 0.25];
        for (a, b) in post.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{post:?}");
        }
    }

    #[test]
    fn posterior_is_invariant_to_vocabulary_ordering() {
        let labels = vec!["x".to_string(), "y".to_string()];
        let profiles = vec![
            (record("1", &[("gmail/mail", 4), ("youtube/comment", 1)]), "x".to_string()),
            (record("2", &[("facebook/post_image", 3)]), "y".to_string()),
        ];
        let query = record("q", &[("gmail/mail", 2), ("facebook/post_image", 1), ("zzz", 2)]);

        let vocab = default_vocab();
        let base = nb_predict(&nb_train("t", &labels, &profiles, &vocab, 1.0).unwrap(), &query);

        let mut rng = substream(77, "profiler/vocab");
        for _ in 0..5 {
            let mut shuffled = vocab.clone();
            shuffled.shuffle(&mut rng);
            let model = nb_train("t", &labels, &profiles, &shuffled, 1.0).unwrap();
            let post = nb_predict(&model, &query);
            for (a, b) in post.iter().zip(&base) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_counts_preserves_a_strict_argmax() {
        let labels = vec!["x".to_string(), "y".to_string()];
        let profiles = vec![
            (record("1", &[("gmail/mail", 9), ("youtube/comment", 1)]), "x".to_string()),
            (record("2", &[("gmail/mail", 1), ("youtube/comment", 9)]), "y".to_string()),
        ];
        let model = nb_train("t", &labels, &profiles, &default_vocab(), 1.0).unwrap();

        let base = record("q", &[("gmail/mail", 3), ("youtube/comment", 1)]);
        let p1 = nb_predict(&model, &base);
        assert!(p1[0] > p1[1], "argmax must be strict at k = 1");
        for k in [2u64, 3, 10, 40] {
            let scaled = record(
                "q",
                &[("gmail/mail", 3 * k), ("youtube/comment", k)],
            );
            let p = nb_predict(&model, &scaled);
            assert!(p[0] > p[1], "argmax changed at k = {k}: {p:?}");
        }
    }

    #[test]
    fn missing_label_is_empty_training() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let profiles = vec![(record("1", &[("gmail/mail", 1)]), "a".to_string())];
        let err = nb_train("age", &labels, &profiles, &default_vocab(), 1.0).unwrap_err();
        assert!(matches!(err, ProfilerError::EmptyTraining(ref s) if s == "age/b"));
        let err = nb_train("age", &labels, &[], &default_vocab(), 1.0).unwrap_err();
        assert!(matches!(err, ProfilerError::EmptyTraining(ref s) if s == "age"));
    }

    #[test]
    fn train_all_covers_each_configured_trait() {
        let mut db = ProfileDb::default();
        db.update_profile("a", 1, "gmail", "mail");
        db.update_profile("b", 2, "youtube", "play_video");
        let mut config = TraitConfig::new();
        config.insert("gender".into(), vec!["f".into(), "m".into()]);
        let mut truth = TraitTruth::new();
        truth.insert("a".into(), BTreeMap::from([("gender".into(), "f".into())]));
        truth.insert("b".into(), BTreeMap::from([("gender".into(), "m".into())]));
        let models = nb_train_all(&db, &config, &truth, 1.0).unwrap();
        assert_eq!(models.len(), 1);
        assert_eq!(models["gender"].labels, vec!["f".to_string(), "m".to_string()]);
    }
}
