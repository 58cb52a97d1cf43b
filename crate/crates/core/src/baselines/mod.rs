//! Classical baselines over mergeable flow statistics: a from-scratch
//! random forest and a linear SVM, both consuming the fixed 15-feature
//! vector per stream and organized like the recurrent models (one app
//! classifier plus one activity classifier per eligible app).

pub mod forest;
pub mod stats;
pub mod svm;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{best_split, forest_train, FeatureSubsample, ForestModel, TreeNode};
pub use stats::{
    compute_stats, merge_stats, stats_to_features, FlowStats, SeriesStats, FEATURE_DIM,
    FEATURE_NAMES,
};
pub use svm::{svm_objective, svm_subgradient, svm_train, LinearSvmModel};

use crate::capture::ExportStream;
use crate::models::{activities_of, app_index, ModelError, APP_ACTIVITIES, APP_CLASSES, K_APP};
use crate::util::{to_json_f64_exact, write_atomic};

/// App forest size ("50 estimators with a depth ... set to 15").
pub const APP_FOREST: (usize, usize) = (50, 15);
/// Activity forest size ("20 estimators and maximum depth of 10").
pub const ACTIVITY_FOREST: (usize, usize) = (20, 10);
/// SVM defaults; invented plumbing, recorded in the bundle meta.
pub const SVM_LAMBDA: f64 = 1e-4;
pub const SVM_EPOCHS: usize = 30;

/// Labeled flow-statistics features, the baseline counterpart of the
/// recurrent models' pooled dataset.
#[derive(Debug, Clone, Default)]
pub struct FlatDataset {
    pub x: Vec<Vec<f64>>,
    pub app: Vec<usize>,
    pub activity: Vec<Option<usize>>,
}

impl FlatDataset {
    /// Featurize labeled export streams; unlabeled streams are counted and
    /// dropped.
    pub fn from_streams(streams: &[ExportStream]) -> (FlatDataset, usize) {
        let mut data = FlatDataset::default();
        let mut skipped = 0;
        for s in streams {
            let Some(app) = s.app_label.as_deref().and_then(app_index) else {
                skipped += 1;
                continue;
            };
            let activity = s.activity_label.as_deref().and_then(|act| {
                activities_of(APP_CLASSES[app]).and_then(|acts| acts.iter().position(|&a| a == act))
            });
            let features = stats_to_features(&compute_stats(&s.samples()));
            data.x.push(features.to_vec());
            data.app.push(app);
            data.activity.push(activity);
        }
        (data, skipped)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Anything that maps a feature vector to a class index.
pub trait FlatClassifier {
    fn predict_class(&self, x: &[f64]) -> usize;
}

impl FlatClassifier for ForestModel {
    fn predict_class(&self, x: &[f64]) -> usize {
        self.predict(x)
    }
}

impl FlatClassifier for LinearSvmModel {
    fn predict_class(&self, x: &[f64]) -> usize {
        self.predict(x)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BaselineMeta {
    /// "forest" or "svm".
    pub kind: String,
    pub seed: u64,
    pub app_classes: Vec<String>,
    pub feature_names: Vec<String>,
    /// Hyperparameters, flat so the file stays self-describing.
    pub params: BTreeMap<String, f64>,
}

/// An app classifier plus per-app activity classifiers of one baseline
/// family.
#[derive(Debug, Clone)]
pub struct BaselineBundle<M> {
    pub app: M,
    pub activities: BTreeMap<String, M>,
    pub meta: BaselineMeta,
}

fn check_classes(data: &FlatDataset) -> Result<(), ModelError> {
    for k in 0..K_APP {
        if !data.app.contains(&k) {
            return Err(ModelError::EmptyClass(APP_CLASSES[k].to_string()));
        }
    }
    for (app, acts) in APP_ACTIVITIES {
        let k = app_index(app).unwrap();
        for (a, name) in acts.iter().enumerate() {
            let present = data
                .app
                .iter()
                .zip(&data.activity)
                .any(|(&ka, &act)| ka == k && act == Some(a));
            if !present {
                return Err(ModelError::EmptyClass(format!("{app}/{name}")));
            }
        }
    }
    Ok(())
}

/// Activity-classifier training set for one app: its samples with activity
/// labels, restricted to `indices`.
fn activity_subset(data: &FlatDataset, indices: &[usize], app: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &i in indices {
        if data.app[i] == app {
            if let Some(a) = data.activity[i] {
                x.push(data.x[i].clone());
                y.push(a);
            }
        }
    }
    (x, y)
}

/// Forest sizes for the app model and the per-app activity models.
#[derive(Debug, Clone)]
pub struct ForestParams {
    pub app_trees: usize,
    pub app_depth: usize,
    pub activity_trees: usize,
    pub activity_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            app_trees: APP_FOREST.0,
            app_depth: APP_FOREST.1,
            activity_trees: ACTIVITY_FOREST.0,
            activity_depth: ACTIVITY_FOREST.1,
        }
    }
}

/// Regularization and epoch budget shared by all linear SVM models.
#[derive(Debug, Clone)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { lambda: SVM_LAMBDA, epochs: SVM_EPOCHS }
    }
}

/// Train the forest family on `indices` of `data` at the default sizes.
pub fn train_forest_bundle(
    data: &FlatDataset,
    indices: &[usize],
    seed: u64,
) -> Result<BaselineBundle<ForestModel>, ModelError> {
    train_forest_bundle_with(data, indices, seed, &ForestParams::default())
}

/// Train the forest family on `indices` of `data`.
pub fn train_forest_bundle_with(
    data: &FlatDataset,
    indices: &[usize],
    seed: u64,
    fp: &ForestParams,
) -> Result<BaselineBundle<ForestModel>, ModelError> {
    check_classes(data)?;
    let x: Vec<Vec<f64>> = indices.iter().map(|&i| data.x[i].clone()).collect();
    let y: Vec<usize> = indices.iter().map(|&i| data.app[i]).collect();
    let app = forest_train(&x, &y, K_APP, fp.app_trees, fp.app_depth, FeatureSubsample::Sqrt, seed);

    let mut activities = BTreeMap::new();
    for (name, acts) in APP_ACTIVITIES {
        let k = app_index(name).unwrap();
        let (ax, ay) = activity_subset(data, indices, k);
        if ay.is_empty() {
            continue;
        }
        let model = forest_train(
            &ax,
            &ay,
            acts.len(),
            fp.activity_trees,
            fp.activity_depth,
            FeatureSubsample::Sqrt,
            crate::util::seed_for(seed, &format!("forest/activity/{name}")),
        );
        activities.insert(name.to_string(), model);
    }

    let mut params = BTreeMap::new();
    params.insert("app_n_estimators".into(), fp.app_trees as f64);
    params.insert("app_max_depth".into(), fp.app_depth as f64);
    params.insert("activity_n_estimators".into(), fp.activity_trees as f64);
    params.insert("activity_max_depth".into(), fp.activity_depth as f64);
    Ok(BaselineBundle { app, activities, meta: meta_for("forest", seed, params) })
}

/// Train the SVM family on `indices` of `data` at the default settings.
pub fn train_svm_bundle(
    data: &FlatDataset,
    indices: &[usize],
    seed: u64,
) -> Result<BaselineBundle<LinearSvmModel>, ModelError> {
    train_svm_bundle_with(data, indices, seed, &SvmParams::default())
}

/// Train the SVM family on `indices` of `data`.
pub fn train_svm_bundle_with(
    data: &FlatDataset,
    indices: &[usize],
    seed: u64,
    sp: &SvmParams,
) -> Result<BaselineBundle<LinearSvmModel>, ModelError> {
    check_classes(data)?;
    let x: Vec<Vec<f64>> = indices.iter().map(|&i| data.x[i].clone()).collect();
    let y: Vec<usize> = indices.iter().map(|&i| data.app[i]).collect();
    let app = svm_train(&x, &y, K_APP, sp.lambda, sp.epochs, seed);

    let mut activities = BTreeMap::new();
    for (name, acts) in APP_ACTIVITIES {
        let k = app_index(name).unwrap();
        let (ax, ay) = activity_subset(data, indices, k);
        if ay.is_empty() {
            continue;
        }
        let model = svm_train(
            &ax,
            &ay,
            acts.len(),
            sp.lambda,
            sp.epochs,
            crate::util::seed_for(seed, &format!("svm/activity/{name}")),
        );
        activities.insert(name.to_string(), model);
    }

    let mut params = BTreeMap::new();
    params.insert("lambda".into(), sp.lambda);
    params.insert("epochs".into(), sp.epochs as f64);
    Ok(BaselineBundle { app, activities, meta: meta_for("svm", seed, params) })
}

fn meta_for(kind: &str, seed: u64, params: BTreeMap<String, f64>) -> BaselineMeta {
    BaselineMeta {
        kind: kind.to_string(),
        seed,
        app_classes: APP_CLASSES.iter().map(|s| s.to_string()).collect(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        params,
    }
}

/// Evaluate a baseline bundle on `indices`: app accuracy plus per-app
/// activity accuracy through the TRUE app's classifier, in the same report
/// shape as the recurrent models.
pub fn evaluate_baseline<M: FlatClassifier + Sync>(
    bundle: &BaselineBundle<M>,
    data: &FlatDataset,
    indices: &[usize],
) -> (crate::models::EvalReport, Vec<crate::models::PredictionRecord>) {
    let rows: Vec<(usize, usize, Option<usize>)> = crate::par::map_collect(indices, |&i| {
        let pred_app = bundle.app.predict_class(&data.x[i]);
        let pred_act = data.activity[i].and_then(|_| {
            bundle
                .activities
                .get(APP_CLASSES[data.app[i]])
                .map(|m| m.predict_class(&data.x[i]))
        });
        (i, pred_app, pred_act)
    });

    let mut app_confusion = vec![vec![0u64; K_APP]; K_APP];
    let mut app_hits = 0usize;
    let mut activity: BTreeMap<String, crate::models::eval::ActivityReport> = APP_ACTIVITIES
        .iter()
        .map(|(app, acts)| {
            (
                app.to_string(),
                crate::models::eval::ActivityReport {
                    classes: acts.iter().map(|s| s.to_string()).collect(),
                    n: 0,
                    accuracy: 0.0,
                    confusion: vec![vec![0; acts.len()]; acts.len()],
                },
            )
        })
        .collect();
    let mut records = Vec::with_capacity(rows.len());

    for (i, pred_app, pred_act) in rows {
        let true_app = data.app[i];
        app_confusion[true_app][pred_app] += 1;
        if true_app == pred_app {
            app_hits += 1;
        }
        let app_name = APP_CLASSES[true_app];
        if let (Some(t), Some(p)) = (data.activity[i], pred_act) {
            let rep = activity.get_mut(app_name).expect("pred_act implies a classifier");
            rep.confusion[t][p] += 1;
            rep.n += 1;
        }
        let acts = activities_of(app_name);
        records.push(crate::models::PredictionRecord {
            index: i,
            true_app: app_name.to_string(),
            pred_app: APP_CLASSES[pred_app].to_string(),
            routed: false,
            true_activity: data.activity[i].and_then(|a| acts.map(|v| v[a].to_string())),
            pred_activity: pred_act.and_then(|a| acts.map(|v| v[a].to_string())),
            routed_activity: None,
        });
    }

    for rep in activity.values_mut() {
        let hits: u64 = (0..rep.classes.len()).map(|i| rep.confusion[i][i]).sum();
        rep.accuracy = if rep.n > 0 { hits as f64 / rep.n as f64 } else { 0.0 };
    }

    let report = crate::models::EvalReport {
        n: indices.len(),
        app_classes: APP_CLASSES.iter().map(|s| s.to_string()).collect(),
        app_accuracy: if indices.is_empty() { 0.0 } else { app_hits as f64 / indices.len() as f64 },
        app_confusion,
        activity,
    };
    (report, records)
}

impl<M: Serialize + serde::de::DeserializeOwned> BaselineBundle<M> {
    /// Write `<kind>_app.json`, `<kind>_activity_<app>.json`, and
    /// `<kind>_meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let kind = &self.meta.kind;
        write_atomic(
            &dir.join(format!("{kind}_app.json")),
            to_json_f64_exact(&self.app).expect("model serializes").as_bytes(),
        )?;
        for (name, model) in &self.activities {
            write_atomic(
                &dir.join(format!("{kind}_activity_{name}.json")),
                to_json_f64_exact(model).expect("model serializes").as_bytes(),
            )?;
        }
        write_atomic(
            &dir.join(format!("{kind}_meta.json")),
            to_json_f64_exact(&self.meta).expect("meta serializes").as_bytes(),
        )
    }

    /// Load a bundle saved by [`BaselineBundle::save`].
    pub fn load(dir: &Path, kind: &str) -> Result<Self, ModelError> {
        let read = |name: String| {
            fs::read_to_string(dir.join(&name))
                .map_err(|e| ModelError::BadBundle(format!("{name}: {e}")))
        };
        let meta: BaselineMeta = serde_json::from_str(&read(format!("{kind}_meta.json"))?)
            .map_err(|e| ModelError::BadBundle(format!("{kind}_meta.json: {e}")))?;
        let app: M = serde_json::from_str(&read(format!("{kind}_app.json"))?)
            .map_err(|e| ModelError::BadBundle(format!("{kind}_app.json: {e}")))?;
        let mut activities = BTreeMap::new();
        for (name, _) in APP_ACTIVITIES {
            let file = format!("{kind}_activity_{name}.json");
            if !dir.join(&file).exists() {
                continue;
            }
            let model: M = serde_json::from_str(&read(file.clone())?)
                .map_err(|e| ModelError::BadBundle(format!("{file}: {e}")))?;
            activities.insert(name.to_string(), model);
        }
        Ok(BaselineBundle { app, activities, meta })
    }
}
