//! Classifies encrypted smartphone traffic streams by application and in-app
//! activity, and aggregates per-user activity histories into trait predictions.
//!
//! The pipeline: parse pcap captures into bidirectional streams ([`capture`]),
//! turn each stream into a normalized, exponentially pooled feature series
//! ([`preprocess`]), classify it with an ensemble of peephole LSTM cells
//! ([`nn`], [`models`]) or classical baselines ([`baselines`]), and feed
//! accumulated (app, activity) histories into a naive Bayes trait classifier
//! ([`profiler`]). [`synth`] generates labeled synthetic captures and user
//! populations so the whole pipeline can run end to end on a desk.

pub mod baselines;
pub mod capture;
pub mod models;
pub mod nn;
pub mod par;
pub mod preprocess;
pub mod profiler;
pub mod synth;
pub mod util;
