//! Held-out evaluation: seeded split, per-task accuracy and confusion
//! counts, and a per-sample prediction dump that downstream tooling can
//! recount.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::util::substream;

use super::activity::activity_forward;
use super::app::app_forward;
use super::bundle::ModelBundle;
use super::{route, Dataset, APP_CLASSES, K_APP};

/// Deterministic shuffle of 0..n split into (train, test) index sets.
pub fn split_indices(n: usize, test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!((0.0..1.0).contains(&test_frac));
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, "eval/split");
    ids.shuffle(&mut rng);
    let test_n = (n as f64 * test_frac).round() as usize;
    let test = ids[..test_n].to_vec();
    let train = ids[test_n..].to_vec();
    (train, test)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivityReport {
    pub classes: Vec<String>,
    pub n: usize,
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub app_classes: Vec<String>,
    pub app_accuracy: f64,
    /// confusion[true][predicted]
    pub app_confusion: Vec<Vec<u64>>,
    pub activity: BTreeMap<String, ActivityReport>,
}

/// One evaluated sample, written as a JSONL row. Accuracies and confusion
/// matrices are exact functions of these rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Index into the evaluated dataset.
    pub index: usize,
    pub true_app: String,
    pub pred_app: String,
    pub routed: bool,
    pub true_activity: Option<String>,
    /// Activity predicted by the TRUE app's classifier (scoring path).
    pub pred_activity: Option<String>,
    /// Activity predicted via routing (deployment path), when routed to an
    /// app that has a classifier.
    pub routed_activity: Option<String>,
}

/// Evaluate the bundle on `indices` of `dataset`.
///
/// Application accuracy scores the softmax argmax. Activity accuracy is
/// measured per application on the samples whose TRUE app owns a
/// classifier, mirroring how those classifiers are trained; the routed
/// deployment path is recorded per sample but scored only through the app
/// task.
pub fn evaluate(bundle: &ModelBundle, dataset: &Dataset, indices: &[usize]) -> (EvalReport, Vec<PredictionRecord>) {
    struct Row {
        index: usize,
        true_app: usize,
        pred_app: usize,
        routed: Option<usize>,
        true_act: Option<usize>,
        pred_act: Option<usize>,
        routed_act: Option<usize>,
    }

    let rows: Vec<Row> = crate::par::map_collect(indices, |&i| {
        let sample = &dataset.samples[i];
        let fwd = app_forward(&bundle.app, &sample.pooled);
        let pred_app = argmax(&fwd.softmax);
        let routed = route(&fwd.softmax, bundle.meta.tau);

        // Scoring path: the true app's classifier, like in training.
        let pred_act = sample.activity.and_then(|_| {
            bundle.activities.get(APP_CLASSES[sample.app]).map(|m| {
                argmax(&activity_forward(m, &sample.pooled, &fwd.softmax, &fwd.final_cell()))
            })
        });
        // Deployment path: whatever the router picked.
        let routed_act = routed.and_then(|app| {
            bundle.activities.get(APP_CLASSES[app]).map(|m| {
                argmax(&activity_forward(m, &sample.pooled, &fwd.softmax, &fwd.final_cell()))
            })
        });
        Row {
            index: i,
            true_app: sample.app,
            pred_app,
            routed,
            true_act: sample.activity,
            pred_act,
            routed_act,
        }
    });

    let mut app_confusion = vec![vec![0u64; K_APP]; K_APP];
    let mut app_hits = 0usize;
    let mut activity: BTreeMap<String, ActivityReport> = super::APP_ACTIVITIES
        .iter()
        .map(|(app, acts)| {
            (
                app.to_string(),
                ActivityReport {
                    classes: acts.iter().map(|s| s.to_string()).collect(),
                    n: 0,
                    accuracy: 0.0,
                    confusion: vec![vec![0; acts.len()]; acts.len()],
                },
            )
        })
        .collect();
    let mut records = Vec::with_capacity(rows.len());

    for row in rows {
        app_confusion[row.true_app][row.pred_app] += 1;
        if row.true_app == row.pred_app {
            app_hits += 1;
        }
        let app_name = APP_CLASSES[row.true_app];
        if let (Some(t), Some(p)) = (row.true_act, row.pred_act) {
            let rep = activity.get_mut(app_name).expect("pred_act implies a classifier");
            rep.confusion[t][p] += 1;
            rep.n += 1;
        }
        let acts = super::activities_of(app_name);
        records.push(PredictionRecord {
            index: row.index,
            true_app: app_name.to_string(),
            pred_app: APP_CLASSES[row.pred_app].to_string(),
            routed: row.routed.is_some(),
            true_activity: row.true_act.and_then(|a| acts.map(|v| v[a].to_string())),
            pred_activity: row.pred_act.and_then(|a| acts.map(|v| v[a].to_string())),
            routed_activity: row.routed.and_then(|app| {
                row.routed_act.and_then(|a| {
                    super::activities_of(APP_CLASSES[app]).map(|v| v[a].to_string())
                })
            }),
        });
    }

    for rep in activity.values_mut() {
        let hits: u64 = (0..rep.classes.len()).map(|i| rep.confusion[i][i]).sum();
        rep.accuracy = if rep.n > 0 { hits as f64 / rep.n as f64 } else { 0.0 };
    }

    let report = EvalReport {
        n: indices.len(),
        app_classes: APP_CLASSES.iter().map(|s| s.to_string()).collect(),
        app_accuracy: if indices.is_empty() { 0.0 } else { app_hits as f64 / indices.len() as f64 },
        app_confusion,
        activity,
    };
    (report, records)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap()
}

/// Render a confusion matrix: header row of predicted classes, one row per
/// true class.
pub fn confusion_csv(classes: &[String], confusion: &[Vec<u64>]) -> String {
    let mut out = String::from("true");
    for c in classes {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (c, row) in classes.iter().zip(confusion) {
        out.push_str(c);
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_predictions_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("prediction rows serialize"));
        out.push('\n');
    }
    out
}

pub fn read_predictions_jsonl(text: &str) -> Result<Vec<PredictionRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{activities_of, Sample};
    use crate::preprocess::{ENTRY_DIM, POOLED_LEN};

    fn flat_sample(app: usize, activity: Option<usize>) -> Sample {
        Sample { pooled: vec![[0.0; ENTRY_DIM]; POOLED_LEN], app, activity }
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let (train, test) = split_indices(100, 0.2, 42);
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 80);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let (train2, test2) = split_indices(100, 0.2, 42);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (_, test3) = split_indices(100, 0.2, 43);
        assert_ne!(test, test3);
    }

    #[test]
    fn zero_model_confusion_counts_every_sample_once() {
        let bundle = ModelBundle::zeros(1);
        let mut dataset = Dataset::default();
        for app in 0..K_APP {
            for j in 0..4 {
                let act = activities_of(APP_CLASSES[app]).map(|acts| j % acts.len());
                dataset.samples.push(flat_sample(app, act));
            }
        }
        let indices: Vec<usize> = (0..dataset.samples.len()).collect();
        let (report, records) = evaluate(&bundle, &dataset, &indices);
        assert_eq!(report.n, 20);
        let total: u64 = report.app_confusion.iter().flatten().sum();
        assert_eq!(total, 20);
        // Zero params → uniform softmax → argmax is class 0, never routed.
        assert!((report.app_accuracy - 0.2).abs() < 1e-12);
        for row in &report.app_confusion {
            assert_eq!(row[0], 4);
        }
        assert!(records.iter().all(|r| !r.routed && r.routed_activity.is_none()));
        // Activity rows exist for the three activity apps.
        assert_eq!(report.activity.len(), 3);
        for (app, rep) in &report.activity {
            assert_eq!(rep.n, 4, "{app}");
            let total: u64 = rep.confusion.iter().flatten().sum();
            assert_eq!(total, 4);
        }
    }

    #[test]
    fn accuracies_recount_from_the_prediction_dump() {
        let bundle = ModelBundle::zeros(1);
        let mut dataset = Dataset::default();
        for app in 0..K_APP {
            for j in 0..6 {
                let act = activities_of(APP_CLASSES[app]).map(|acts| j % acts.len());
                dataset.samples.push(flat_sample(app, act));
            }
        }
        let indices: Vec<usize> = (0..dataset.samples.len()).collect();
        let (report, records) = evaluate(&bundle, &dataset, &indices);

        let text = write_predictions_jsonl(&records);
        let parsed = read_predictions_jsonl(&text).unwrap();
        assert_eq!(parsed.len(), records.len());
        let hits = parsed.iter().filter(|r| r.true_app == r.pred_app).count();
        assert!((report.app_accuracy - hits as f64 / parsed.len() as f64).abs() < 1e-12);
        for (app, rep) in &report.activity {
            let rows: Vec<_> = parsed.iter().filter(|r| &r.true_app == app).collect();
            let hits = rows
                .iter()
                .filter(|r| r.true_activity.is_some() && r.true_activity == r.pred_activity)
                .count();
            let n = rows.iter().filter(|r| r.pred_activity.is_some()).count();
            assert_eq!(n, rep.n);
            assert!((rep.accuracy - hits as f64 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_layout_is_header_predicted_rows_true() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let m = vec![vec![3, 1], vec![0, 2]];
        let csv = confusion_csv(&classes, &m);
        assert_eq!(csv, "true,a,b\na,3,1\nb,0,2\n");
    }
}
