//! End-to-end checks of the binary: exit codes, atomic output behavior,
//! config handling, and small pipeline runs.

use std::path::Path;
use std::process::{Command, Output};

use flowlens_core::synth::sha256_hex;

fn flowlens(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlens"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}: stdout={} stderr={}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_zero_and_unknown_flags_exit_sixty_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&flowlens(dir.path(), &["--help"]), 0, "--help");
    assert_code(&flowlens(dir.path(), &["synth", "--help"]), 0, "synth --help");
    assert_code(&flowlens(dir.path(), &["--bogus"]), 64, "unknown flag");
    assert_code(&flowlens(dir.path(), &["synth", "--bogus"]), 64, "unknown subcommand flag");
    assert_code(&flowlens(dir.path(), &["frobnicate"]), 64, "unknown subcommand");
    assert_code(&flowlens(dir.path(), &[]), 64, "missing subcommand");
}

#[test]
fn missing_and_corrupt_inputs_exit_two_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&flowlens(dir.path(), &["ingest", "missing.pcap"]), 2, "missing pcap");

    std::fs::write(dir.path().join("bad.pcap"), b"this is not a capture").unwrap();
    let out = flowlens(dir.path(), &["ingest", "bad.pcap", "--out", "got"]);
    assert_code(&out, 2, "corrupt pcap");
    assert!(
        !dir.path().join("got").exists(),
        "failed ingest must not leave output behind"
    );

    assert_code(
        &flowlens(dir.path(), &["train", "--model", "forest"]),
        2,
        "missing streams file",
    );
}

#[test]
fn bad_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg"), "definitely not = valid key\n").unwrap();
    let out = flowlens(dir.path(), &["synth", "--config", "cfg", "--scale", "0.01"]);
    assert_code(&out, 2, "unknown config key");
    assert_code(
        &flowlens(dir.path(), &["synth", "--config", "missing.cfg"]),
        2,
        "missing config file",
    );
}

#[test]
fn synth_manifest_hashes_match_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = flowlens(
        dir.path(),
        &["synth", "--scale", "0.01", "--users", "4", "--events-per-user", "10", "--seed", "3"],
    );
    assert_code(&out, 0, "synth");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("data/manifest.json")).unwrap())
            .unwrap();
    let files = manifest["files"].as_object().unwrap();
    assert_eq!(files.len(), 4, "pcap, labels, events, traits");
    for (name, hash) in files {
        let bytes = std::fs::read(dir.path().join("data").join(name)).unwrap();
        assert_eq!(hash.as_str().unwrap(), sha256_hex(&bytes), "hash of {name}");
    }
}

#[test]
fn same_seed_reruns_are_byte_identical_and_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg"), "scale = 0.01\nseed = 9\nusers = 3\n").unwrap();

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in ["a", "b"] {
        let out = flowlens(dir.path(), &["synth", "--config", "cfg", "--out", out_dir]);
        assert_code(&out, 0, "synth rerun");
    }
    for name in ["traffic.pcap", "labels.jsonl", "events.jsonl", "traits.json", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }

    // A different seed from a flag beats the config value.
    let out = flowlens(dir.path(), &["synth", "--config", "cfg", "--seed", "10", "--out", "c"]);
    assert_code(&out, 0, "synth seed override");
    assert_ne!(
        std::fs::read(a.join("traffic.pcap")).unwrap(),
        std::fs::read(dir.path().join("c/traffic.pcap")).unwrap(),
        "different seed must change the capture"
    );
}

/// One small pipeline: synth, ingest, forest train/eval, recount oracle.
#[test]
fn pipeline_metrics_match_a_recount_of_the_prediction_dump() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &flowlens(dir.path(), &["synth", "--scale", "0.02", "--users", "0", "--seed", "5"]),
        0,
        "synth",
    );
    assert_code(
        &flowlens(dir.path(), &["ingest", "data/traffic.pcap", "--labels", "data/labels.jsonl"]),
        0,
        "ingest",
    );
    assert_code(&flowlens(dir.path(), &["train", "--model", "forest", "--seed", "5"]), 0, "train");
    assert_code(&flowlens(dir.path(), &["eval", "--model", "forest", "--seed", "5"]), 0, "eval");

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/metrics.json")).unwrap())
            .unwrap();
    let dump = std::fs::read_to_string(dir.path().join("out/predictions.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> =
        dump.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), metrics["n"].as_u64().unwrap() as usize);

    let correct = rows.iter().filter(|r| r["true_app"] == r["pred_app"]).count();
    let recounted = correct as f64 / rows.len() as f64;
    assert!(
        (metrics["app_accuracy"].as_f64().unwrap() - recounted).abs() < 1e-12,
        "metrics accuracy {} != recount {recounted}",
        metrics["app_accuracy"]
    );

    let csv = std::fs::read_to_string(dir.path().join("out/app_confusion.csv")).unwrap();
    assert!(csv.starts_with("true,"), "confusion CSV header: {csv}");
    assert_eq!(csv.lines().count(), 6, "header plus one row per class");
}

#[test]
fn lstm_zero_batches_writes_an_initialized_bundle() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &flowlens(dir.path(), &["synth", "--scale", "0.02", "--users", "0", "--seed", "2"]),
        0,
        "synth",
    );
    assert_code(
        &flowlens(dir.path(), &["ingest", "data/traffic.pcap", "--labels", "data/labels.jsonl"]),
        0,
        "ingest",
    );
    assert_code(
        &flowlens(dir.path(), &["train", "--model", "lstm", "--batches", "0", "--seed", "2"]),
        0,
        "train --batches 0",
    );
    assert!(dir.path().join("models/app.json").is_file());
    assert!(dir.path().join("models/meta.json").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("models/train_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["app_loss"].as_array().unwrap().len(), 0);
    // The untrained bundle still loads and scores.
    assert_code(&flowlens(dir.path(), &["eval", "--model", "lstm", "--seed", "2"]), 0, "eval");
}

#[test]
fn profile_trains_predicts_and_gives_priors_on_an_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(
        &flowlens(
            dir.path(),
            &["synth", "--scale", "0.01", "--users", "12", "--events-per-user", "30", "--seed", "11"],
        ),
        0,
        "synth",
    );
    assert_code(&flowlens(dir.path(), &["profile", "--mode", "train"]), 0, "profile train");
    assert_code(&flowlens(dir.path(), &["profile", "--mode", "predict"]), 0, "profile predict");

    let posteriors: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/posteriors.json")).unwrap())
            .unwrap();
    let persona = &posteriors["persona"];
    let users = persona["users"].as_object().unwrap();
    assert_eq!(users.len(), 12);
    for (user, p) in users {
        let sum: f64 = p.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "{user} posterior sums to {sum}");
    }
    let prior_sum: f64 =
        persona["prior"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((prior_sum - 1.0).abs() < 1e-9);

    // An empty event log yields the prior alone: no users, no posteriors.
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    assert_code(
        &flowlens(
            dir.path(),
            &[
                "profile", "--mode", "predict", "--events", "empty.jsonl",
                "--models", "models/trait_models.json", "--out", "out2",
            ],
        ),
        0,
        "profile predict on empty log",
    );
    let empty: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out2/posteriors.json")).unwrap())
            .unwrap();
    assert_eq!(empty["persona"]["users"].as_object().unwrap().len(), 0);
    assert_eq!(empty["persona"]["prior"].as_array().unwrap().len(), persona["prior"].as_array().unwrap().len());
}

#[test]
fn gradcheck_passes_and_the_sabotage_control_fails_with_seventy() {
    let dir = tempfile::tempdir().unwrap();
    let out = flowlens(dir.path(), &["gradcheck", "--instances", "2", "--seed", "21"]);
    assert_code(&out, 0, "gradcheck");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/gradcheck.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    assert!(report["instances"][0]["cell"]["max_rel_err"].as_f64().unwrap() < 1e-4);

    let out = flowlens(
        dir.path(),
        &["gradcheck", "--instances", "1", "--sabotage", "--seed", "21", "--out", "sab"],
    );
    assert_code(&out, 70, "sabotaged gradcheck");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sab/gradcheck.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(false));
}
