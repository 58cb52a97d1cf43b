//! On-disk model bundle: one directory holding `app.json`, one
//! `activity_<app>.json` per activity classifier, and `meta.json`. Floats
//! are written at 17 significant digits, so a saved bundle loads back
//! bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::{to_json_f64_exact, write_atomic};

use super::{ActivityClassifier, AppClassifier, ModelError, APP_ACTIVITIES, APP_CLASSES};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BundleMeta {
    pub app_classes: Vec<String>,
    pub tau: f64,
    pub size_cap: u32,
    pub delay_cap_secs: f64,
    pub seed: u64,
    pub gate_depth: usize,
    pub n_batches: usize,
    pub batch_size: usize,
}

impl Default for BundleMeta {
    fn default() -> Self {
        let cfg = super::train::TrainConfig::default();
        BundleMeta {
            app_classes: APP_CLASSES.iter().map(|s| s.to_string()).collect(),
            tau: cfg.tau,
            size_cap: cfg.size_cap,
            delay_cap_secs: cfg.delay_cap_secs,
            seed: cfg.seed,
            gate_depth: cfg.gate_depth,
            n_batches: cfg.n_batches,
            batch_size: cfg.batch_size,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub app: AppClassifier,
    /// Keyed by application name.
    pub activities: BTreeMap<String, ActivityClassifier>,
    pub meta: BundleMeta,
}

impl ModelBundle {
    /// All-zero parameters; useful as a fixed point for tests.
    pub fn zeros(gate_depth: usize) -> Self {
        ModelBundle {
            app: AppClassifier::zeros(gate_depth),
            activities: APP_ACTIVITIES
                .iter()
                .map(|(app, acts)| {
                    (app.to_string(), ActivityClassifier::zeros(app, acts, gate_depth))
                })
                .collect(),
            meta: BundleMeta { gate_depth, ..BundleMeta::default() },
        }
    }

    /// Write the bundle into `dir`, creating it if needed. Each file is
    /// written atomically.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let dump = |v: String| v.into_bytes();
        write_atomic(
            &dir.join("app.json"),
            &dump(to_json_f64_exact(&self.app).expect("app model serializes")),
        )?;
        for (name, model) in &self.activities {
            write_atomic(
                &dir.join(format!("activity_{name}.json")),
                &dump(to_json_f64_exact(model).expect("activity model serializes")),
            )?;
        }
        write_atomic(
            &dir.join("meta.json"),
            &dump(to_json_f64_exact(&self.meta).expect("meta serializes")),
        )
    }

    /// Load a bundle saved by [`ModelBundle::save`]. Activity files are
    /// discovered from the meta's class list.
    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name))
                .map_err(|e| ModelError::BadBundle(format!("{name}: {e}")))
        };
        let meta: BundleMeta = serde_json::from_str(&read("meta.json")?)
            .map_err(|e| ModelError::BadBundle(format!("meta.json: {e}")))?;
        let app: AppClassifier = serde_json::from_str(&read("app.json")?)
            .map_err(|e| ModelError::BadBundle(format!("app.json: {e}")))?;
        let mut activities = BTreeMap::new();
        for (name, _) in APP_ACTIVITIES {
            let file = format!("activity_{name}.json");
            if !dir.join(&file).exists() {
                continue;
            }
            let model: ActivityClassifier = serde_json::from_str(&read(&file)?)
                .map_err(|e| ModelError::BadBundle(format!("{file}: {e}")))?;
            if model.app != name {
                return Err(ModelError::BadBundle(format!(
                    "{file} holds a model for {}",
                    model.app
                )));
            }
            activities.insert(name.to_string(), model);
        }
        Ok(ModelBundle { app, activities, meta })
    }
}
