//! `flowlens train`: fit one model family on the training side of the
//! seeded split and save its bundle.

use std::path::Path;

use flowlens_core::baselines::{
    train_forest_bundle_with, train_svm_bundle_with, FlatDataset, ForestParams, SvmParams,
};
use flowlens_core::models::{split_indices, train, Dataset, TrainConfig};
use flowlens_core::util::to_json_f64_exact;

use crate::config::RunConfig;
use crate::{CliError, ModelKind};

/// Split `n` samples with the configured holdout; `holdout == 0` trains on
/// everything (and eval then scores everything).
pub fn split_for(cfg: &RunConfig, n: usize) -> (Vec<usize>, Vec<usize>) {
    if cfg.holdout == 0.0 {
        let all: Vec<usize> = (0..n).collect();
        return (all.clone(), all);
    }
    split_indices(n, cfg.holdout, cfg.seed)
}

pub fn run(
    cfg: &RunConfig,
    model: ModelKind,
    streams: Option<&Path>,
    labels: Option<&Path>,
) -> Result<(), CliError> {
    let streams_path = streams
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.data_dir.join("streams.jsonl"));
    let (exports, _) = super::load_streams(&streams_path, labels, &cfg.data_dir.join("labels.jsonl"))?;

    let out = &cfg.model_dir;
    match model {
        ModelKind::Lstm => {
            let (dataset, skipped) = Dataset::from_streams(&exports);
            let n = dataset.samples.len();
            if n == 0 {
                return Err(CliError::Data("no labeled samples to train on".into()));
            }
            let (train_idx, _) = split_for(cfg, n);
            let train_set = Dataset {
                samples: train_idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
            };
            let train_cfg = TrainConfig {
                n_batches: cfg.n_batches,
                batch_size: cfg.batch_size,
                lr: cfg.lr,
                gate_depth: cfg.gate_depth,
                tau: cfg.tau,
                seed: cfg.seed,
                size_cap: cfg.size_cap,
                delay_cap_secs: cfg.delay_cap,
            };
            let (bundle, report) = train(&train_set, &train_cfg)?;
            bundle.save(out)?;
            let report_text = to_json_f64_exact(&report)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            super::write_output(out, "train_report.json", report_text.as_bytes())?;
            let last_loss = report.app_loss.last().copied();
            println!(
                "train: lstm on {} of {n} samples ({skipped} unlabeled skipped), {} batches{} -> {}",
                train_idx.len(),
                cfg.n_batches,
                match last_loss {
                    Some(l) => format!(", final app loss {l:.4}"),
                    None => String::new(),
                },
                out.display()
            );
        }
        ModelKind::Forest => {
            let (flat, skipped) = FlatDataset::from_streams(&exports);
            let n = flat.x.len();
            let (train_idx, _) = split_for(cfg, n);
            let fp = ForestParams {
                app_trees: cfg.app_trees,
                app_depth: cfg.app_depth,
                activity_trees: cfg.activity_trees,
                activity_depth: cfg.activity_depth,
            };
            let bundle = train_forest_bundle_with(&flat, &train_idx, cfg.seed, &fp)?;
            bundle.save(out)?;
            println!(
                "train: forest ({}x{}) on {} of {n} samples ({skipped} unlabeled skipped) -> {}",
                cfg.app_trees,
                cfg.app_depth,
                train_idx.len(),
                out.display()
            );
        }
        ModelKind::Svm => {
            let (flat, skipped) = FlatDataset::from_streams(&exports);
            let n = flat.x.len();
            let (train_idx, _) = split_for(cfg, n);
            let sp = SvmParams { lambda: cfg.svm_lambda, epochs: cfg.svm_epochs };
            let bundle = train_svm_bundle_with(&flat, &train_idx, cfg.seed, &sp)?;
            bundle.save(out)?;
            println!(
                "train: svm (lambda {}, {} epochs) on {} of {n} samples ({skipped} unlabeled skipped) -> {}",
                cfg.svm_lambda,
                cfg.svm_epochs,
                train_idx.len(),
                out.display()
            );
        }
    }
    Ok(())
}
