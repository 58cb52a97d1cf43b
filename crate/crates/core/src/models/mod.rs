//! Application and activity classifiers over pooled stream features:
//! an ensemble of chained LSTM cells for the application task, one
//! deep-gated LSTM per application for its activities, thresholded routing
//! between them, training loops, and evaluation.

pub mod activity;
pub mod app;
pub mod bundle;
pub mod eval;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{ENTRY_DIM, POOLED_LEN};

pub use activity::{activity_forward, ActivityClassifier};
pub use app::{app_forward, AppClassifier, AppForward};
pub use bundle::{BundleMeta, ModelBundle};
pub use eval::{confusion_csv, evaluate, split_indices, EvalReport, PredictionRecord};
pub use train::{train, TrainConfig, TrainReport};

/// Application classes, in label order. The last class absorbs background
/// traffic.
pub const APP_CLASSES: [&str; 5] = ["facebook", "youtube", "whatsapp", "gmail", "impertinent"];
pub const K_APP: usize = 5;

/// Activity vocabularies for the applications that have more than one
/// scripted action.
pub const APP_ACTIVITIES: [(&str, &[&str]); 3] = [
    ("facebook", &["post_text", "post_image"]),
    ("youtube", &["play_video", "comment"]),
    ("whatsapp", &["send_message", "send_image"]),
];

/// Probability threshold above which an application prediction is routed to
/// its activity classifier.
pub const DEFAULT_TAU: f64 = 0.5;
/// Hidden size of every LSTM cell.
pub const HIDDEN: usize = 32;

pub fn app_index(name: &str) -> Option<usize> {
    APP_CLASSES.iter().position(|&c| c == name)
}

pub fn activities_of(app: &str) -> Option<&'static [&'static str]> {
    APP_ACTIVITIES
        .iter()
        .find(|(a, _)| *a == app)
        .map(|(_, acts)| *acts)
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("class {0} has no samples")]
    EmptyClass(String),
    #[error("bad bundle: {0}")]
    BadBundle(String),
}

/// One labeled training/evaluation sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub pooled: Vec<[f64; ENTRY_DIM]>,
    pub app: usize,
    /// Index into the app's activity vocabulary.
    pub activity: Option<usize>,
}

/// Labeled feature set, the unit both trainers and evaluators consume.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Featurize labeled export streams. Streams without a known app label
    /// are counted and dropped.
    pub fn from_streams(streams: &[crate::capture::ExportStream]) -> (Dataset, usize) {
        let mut dataset = Dataset::default();
        let mut skipped = 0;
        for s in streams {
            let app = s.app_label.as_deref().and_then(app_index);
            let Some(app) = app else {
                skipped += 1;
                continue;
            };
            let activity = s.activity_label.as_deref().and_then(|act| {
                activities_of(APP_CLASSES[app]).and_then(|acts| acts.iter().position(|&a| a == act))
            });
            let samples = s.samples();
            let Ok(pooled) = crate::preprocess::featurize(&samples) else {
                skipped += 1;
                continue;
            };
            dataset.samples.push(Sample { pooled: pooled.entries, app, activity });
        }
        (dataset, skipped)
    }

    /// Sample indices per app class.
    pub fn by_app(&self) -> [Vec<usize>; K_APP] {
        let mut by: [Vec<usize>; K_APP] = Default::default();
        for (i, s) in self.samples.iter().enumerate() {
            by[s.app].push(i);
        }
        by
    }
}

/// Return the argmax class if its probability clears `tau` (inclusive).
pub fn route(softmax: &[f64], tau: f64) -> Option<usize> {
    debug_assert!((softmax.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let (best, p) = softmax
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))?;
    (*p >= tau).then_some(best)
}

/// Full two-stage prediction for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub app: usize,
    pub app_softmax: Vec<f64>,
    pub routed: bool,
    /// Present iff routed and the predicted app has an activity classifier.
    pub activity: Option<(usize, Vec<f64>)>,
}

/// Run the app model, route, and (when routed to an app with an activity
/// classifier) run that classifier.
pub fn predict(bundle: &ModelBundle, pooled: &[[f64; ENTRY_DIM]]) -> Prediction {
    assert_eq!(pooled.len(), POOLED_LEN);
    let fwd = app_forward(&bundle.app, pooled);
    let app = route(&fwd.softmax, bundle.meta.tau);
    let argmax = fwd
        .softmax
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let activity = app.and_then(|a| {
        bundle.activities.get(APP_CLASSES[a]).map(|m| {
            let soft = activity_forward(m, pooled, &fwd.softmax, &fwd.final_cell());
            let act = soft
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.partial_cmp(y.1).unwrap().then(y.0.cmp(&x.0)))
                .map(|(i, _)| i)
                .unwrap();
            (act, soft)
        })
    });
    Prediction { app: argmax, app_softmax: fwd.softmax, routed: app.is_some(), activity }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_applies_an_inclusive_threshold() {
        assert_eq!(route(&[0.9, 0.05, 0.02, 0.02, 0.01], 0.5), Some(0));
        assert_eq!(route(&[0.2; 5], 0.5), None);
        // Exactly at the threshold still routes.
        assert_eq!(route(&[0.5, 0.5, 0.0, 0.0, 0.0], 0.5), Some(0));
        assert_eq!(route(&[0.1, 0.6, 0.1, 0.1, 0.1], 0.6), Some(1));
    }

    #[test]
    fn raising_tau_never_creates_a_route() {
        let soft = [0.35, 0.3, 0.2, 0.1, 0.05];
        let mut routed_before = true;
        for step in 0..=20 {
            let tau = step as f64 * 0.05;
            let routed = route(&soft, tau).is_some();
            assert!(routed <= routed_before, "tau {tau} re-routed");
            routed_before = routed;
        }
    }

    #[test]
    fn vocabularies_are_consistent() {
        assert_eq!(APP_CLASSES.len(), K_APP);
        for (app, acts) in APP_ACTIVITIES {
            assert!(app_index(app).is_some());
            assert!(acts.len() >= 2);
        }
        assert_eq!(app_index("gmail"), Some(3));
        assert!(activities_of("gmail").is_none());
        assert!(activities_of("impertinent").is_none());
        assert_eq!(activities_of("youtube"), Some(&["play_video", "comment"][..]));
    }
}
