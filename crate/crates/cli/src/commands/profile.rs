//! `flowlens profile`: replay event histories into per-user profiles, then
//! either train naive Bayes trait models or emit posteriors from saved ones.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use flowlens_core::profiler::{
    nb_predict, nb_train_all, read_events_jsonl, ProfileDb, TraitConfig, TraitModel, TraitTruth,
};
use flowlens_core::util::to_json_f64_exact;

use crate::config::RunConfig;
use crate::{CliError, ProfileMode};

/// Posteriors for one trait: the label order, the prior a user with no
/// events would get, and each observed user's posterior plus its argmax.
#[derive(Debug, Serialize)]
struct TraitPosteriors {
    labels: Vec<String>,
    prior: Vec<f64>,
    users: BTreeMap<String, Vec<f64>>,
    predicted: BTreeMap<String, String>,
}

fn replay_events(path: &Path) -> Result<ProfileDb, CliError> {
    let events = read_events_jsonl(&super::read_input(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut db = ProfileDb::default();
    db.replay(&events);
    Ok(db)
}

/// Label sets per trait: the configured file when present, otherwise the
/// distinct labels observed in the ground truth.
fn trait_config(cfg: &RunConfig, truth: &TraitTruth) -> Result<TraitConfig, CliError> {
    if let Some(path) = &cfg.traits_path {
        let text = super::read_input(path)?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }
    let mut config: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for traits in truth.values() {
        for (name, label) in traits {
            let labels = config.entry(name.clone()).or_default();
            if !labels.contains(label) {
                labels.push(label.clone());
            }
        }
    }
    for labels in config.values_mut() {
        labels.sort();
    }
    Ok(config)
}

fn run_train(cfg: &RunConfig, events: &Path, truth_path: &Path) -> Result<(), CliError> {
    let db = replay_events(events)?;
    let truth: TraitTruth = serde_json::from_str(&super::read_input(truth_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", truth_path.display())))?;
    let config = trait_config(cfg, &truth)?;
    if config.is_empty() {
        return Err(CliError::Data("ground truth defines no traits".into()));
    }
    let models = nb_train_all(&db, &config, &truth, cfg.alpha)?;

    let out = &cfg.model_dir;
    let models_text = to_json_f64_exact(&models).map_err(|e| CliError::Internal(e.to_string()))?;
    super::write_output(out, "trait_models.json", models_text.as_bytes())?;
    super::write_output(out, "profiles.json", db.to_snapshot_json().as_bytes())?;
    for (name, model) in &models {
        println!(
            "profile: trained {name} over {} labels from {} users -> {}",
            model.labels.len(),
            db.users.len(),
            out.display()
        );
    }
    Ok(())
}

fn run_predict(cfg: &RunConfig, events: &Path, models_path: &Path) -> Result<(), CliError> {
    let db = replay_events(events)?;
    let models: BTreeMap<String, TraitModel> =
        serde_json::from_str(&super::read_input(models_path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", models_path.display())))?;
    if models.is_empty() {
        return Err(CliError::Data("model file defines no traits".into()));
    }

    let mut output: BTreeMap<String, TraitPosteriors> = BTreeMap::new();
    for (name, model) in &models {
        let prior: Vec<f64> = model.log_prior.iter().map(|lp| lp.exp()).collect();
        let mut users = BTreeMap::new();
        let mut predicted = BTreeMap::new();
        for record in db.users.values() {
            let posterior = nb_predict(model, record);
            let best = posterior
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            predicted.insert(record.user_id.clone(), model.labels[best].clone());
            users.insert(record.user_id.clone(), posterior);
        }
        output.insert(
            name.clone(),
            TraitPosteriors { labels: model.labels.clone(), prior, users, predicted },
        );
    }

    let text = serde_json::to_string_pretty(&output)
        .map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    super::write_output(&cfg.out_dir, "posteriors.json", text.as_bytes())?;
    println!(
        "profile: posteriors for {} traits over {} users -> {}",
        output.len(),
        db.users.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn run(
    cfg: &RunConfig,
    mode: ProfileMode,
    events: Option<&Path>,
    truth: Option<&Path>,
    models: Option<&Path>,
) -> Result<(), CliError> {
    let events_path = events
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.data_dir.join("events.jsonl"));
    match mode {
        ProfileMode::Train => {
            let truth_path = truth
                .map(Path::to_path_buf)
                .unwrap_or_else(|| cfg.data_dir.join("traits.json"));
            run_train(cfg, &events_path, &truth_path)
        }
        ProfileMode::Predict => {
            let models_path = models
                .map(Path::to_path_buf)
                .unwrap_or_else(|| cfg.model_dir.join("trait_models.json"));
            run_predict(cfg, &events_path, &models_path)
        }
    }
}
