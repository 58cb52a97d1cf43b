//! `flowlens eval`: score a saved bundle on the held-out split and write
//! metrics JSON, confusion CSVs, and the per-sample prediction dump.

use std::path::Path;

use flowlens_core::baselines::{
    evaluate_baseline, BaselineBundle, FlatDataset, ForestModel, LinearSvmModel,
};
use flowlens_core::models::{
    confusion_csv, evaluate, Dataset, EvalReport, ModelBundle, PredictionRecord,
};

use crate::config::RunConfig;
use crate::{CliError, ModelKind};

fn write_reports(
    cfg: &RunConfig,
    report: &EvalReport,
    records: &[PredictionRecord],
) -> Result<(), CliError> {
    let out = &cfg.out_dir;
    let metrics = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    super::write_output(out, "metrics.json", metrics.as_bytes())?;
    super::write_output(
        out,
        "app_confusion.csv",
        confusion_csv(&report.app_classes, &report.app_confusion).as_bytes(),
    )?;
    for (app, rep) in &report.activity {
        super::write_output(
            out,
            &format!("activity_confusion_{app}.csv"),
            confusion_csv(&rep.classes, &rep.confusion).as_bytes(),
        )?;
    }
    let mut dump = String::new();
    for r in records {
        dump.push_str(&serde_json::to_string(r).map_err(|e| CliError::Internal(e.to_string()))?);
        dump.push('\n');
    }
    super::write_output(out, "predictions.jsonl", dump.as_bytes())?;
    Ok(())
}

pub fn run(
    cfg: &RunConfig,
    model: ModelKind,
    streams: Option<&Path>,
    labels: Option<&Path>,
    bundle_dir: Option<&Path>,
) -> Result<(), CliError> {
    let streams_path = streams
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.data_dir.join("streams.jsonl"));
    let (exports, _) = super::load_streams(&streams_path, labels, &cfg.data_dir.join("labels.jsonl"))?;
    let dir = bundle_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.model_dir.clone());

    let (report, records) = match model {
        ModelKind::Lstm => {
            let bundle = ModelBundle::load(&dir)?;
            let (dataset, _) = Dataset::from_streams(&exports);
            let (_, test_idx) = super::train::split_for(cfg, dataset.samples.len());
            evaluate(&bundle, &dataset, &test_idx)
        }
        ModelKind::Forest => {
            let bundle: BaselineBundle<ForestModel> = BaselineBundle::load(&dir, "forest")?;
            let (flat, _) = FlatDataset::from_streams(&exports);
            let (_, test_idx) = super::train::split_for(cfg, flat.x.len());
            evaluate_baseline(&bundle, &flat, &test_idx)
        }
        ModelKind::Svm => {
            let bundle: BaselineBundle<LinearSvmModel> = BaselineBundle::load(&dir, "svm")?;
            let (flat, _) = FlatDataset::from_streams(&exports);
            let (_, test_idx) = super::train::split_for(cfg, flat.x.len());
            evaluate_baseline(&bundle, &flat, &test_idx)
        }
    };

    write_reports(cfg, &report, &records)?;
    println!(
        "eval: {} app accuracy {:.4} on {} held-out samples -> {}",
        model.name(),
        report.app_accuracy,
        report.n,
        cfg.out_dir.display()
    );
    for (app, rep) in &report.activity {
        println!("eval: {} activity {app} accuracy {:.4} (n={})", model.name(), rep.accuracy, rep.n);
    }
    Ok(())
}
