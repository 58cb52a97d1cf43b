//! `flowlens synth`: labeled capture, event log, trait truth, manifest.

use flowlens_core::synth::{
    class_counts, default_config, default_population, gen_dataset, gen_users, sha256_hex,
};
use flowlens_core::profiler::write_events_jsonl;

use crate::config::RunConfig;
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let mut dataset_config = default_config(cfg.scale);
    dataset_config.device_ip = cfg.device_ip;
    let files = gen_dataset(&dataset_config, cfg.seed)?;

    // The manifest gains the user files and is written last, so its
    // presence implies every listed file landed.
    let mut manifest: serde_json::Value = serde_json::from_str(&files.manifest_json)
        .map_err(|e| CliError::Internal(format!("manifest does not parse: {e}")))?;

    let mut user_outputs = None;
    if cfg.users > 0 {
        let population = default_population(cfg.users);
        let (events, truth) = gen_users(&population, cfg.events_per_user, cfg.seed)?;
        let events_text = write_events_jsonl(&events);
        let truth_text = serde_json::to_string_pretty(&truth)
            .map_err(|e| CliError::Internal(e.to_string()))? + "\n";
        let files_map = manifest
            .get_mut("files")
            .and_then(|v| v.as_object_mut())
            .ok_or_else(|| CliError::Internal("manifest has no files map".into()))?;
        files_map.insert("events.jsonl".into(), sha256_hex(events_text.as_bytes()).into());
        files_map.insert("traits.json".into(), sha256_hex(truth_text.as_bytes()).into());
        user_outputs = Some((events_text, truth_text, events.len()));
    }

    let out = &cfg.data_dir;
    super::write_output(out, "traffic.pcap", &files.pcap)?;
    super::write_output(out, "labels.jsonl", files.labels_jsonl.as_bytes())?;
    if let Some((events_text, truth_text, _)) = &user_outputs {
        super::write_output(out, "events.jsonl", events_text.as_bytes())?;
        super::write_output(out, "traits.json", truth_text.as_bytes())?;
    }
    let manifest_text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    super::write_output(out, "manifest.json", manifest_text.as_bytes())?;

    let total: usize = class_counts(&dataset_config).iter().map(|(_, _, n)| n).sum();
    println!(
        "synth: {total} streams ({} bytes of pcap) at scale {} into {}",
        files.pcap.len(),
        cfg.scale,
        out.display()
    );
    if let Some((_, _, n_events)) = user_outputs {
        println!("synth: {} users, {n_events} events", cfg.users);
    }
    Ok(())
}
