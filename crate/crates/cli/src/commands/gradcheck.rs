//! `flowlens gradcheck`: verify analytic BPTT gradients against central
//! finite differences over random small instances, per parameter tensor.

use rand::Rng;
use serde::Serialize;

use flowlens_core::nn::{
    bptt_grads, check_gradients, lstm_forward, softmax_xent, DenseParams, LstmParams,
    SeqClassifier,
};
use flowlens_core::util::substream;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct TensorCheck {
    params: usize,
    max_rel_err: f64,
}

#[derive(Debug, Serialize)]
struct InstanceCheck {
    instance: usize,
    h: usize,
    d: usize,
    t: usize,
    k: usize,
    gate_depth: usize,
    cell: TensorCheck,
    head: TensorCheck,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct GradCheckRun {
    instances: Vec<InstanceCheck>,
    eps: f64,
    tol: f64,
    max_rel_err: f64,
    passed: bool,
}

fn sample_loss(model: &SeqClassifier, xs: &[Vec<f64>], label: usize) -> f64 {
    let c0 = vec![0.0; model.cell.h];
    let (thetas, _) = lstm_forward(&model.cell, xs, &c0);
    let theta = thetas.last().expect("sequences are non-empty");
    softmax_xent(&model.head.logits(theta), label).0
}

pub fn run(
    cfg: &RunConfig,
    instances: usize,
    eps: f64,
    tol: f64,
    sabotage: bool,
) -> Result<(), CliError> {
    let mut checks = Vec::with_capacity(instances);
    let mut max_rel_err: f64 = 0.0;

    for i in 0..instances {
        let mut rng = substream(cfg.seed, &format!("gradcheck/{i}"));
        let h = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=8);
        let t = rng.gen_range(1..=10);
        let k = rng.gen_range(2..=5);
        let gate_depth = rng.gen_range(1..=3);
        let model = SeqClassifier {
            cell: LstmParams::init(h, d, gate_depth, &mut rng),
            head: DenseParams::init(k, h, &mut rng),
        };
        let xs: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let label = rng.gen_range(0..k);

        let (_, mut grads) = bptt_grads(&model, &xs, label);
        if sabotage && i == 0 {
            // Negative control: poison the largest cell gradient so the
            // check must fail.
            let worst = grads
                .cell
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(j, _)| j)
                .unwrap_or(0);
            grads.cell[worst] = -grads.cell[worst] - 1.0;
        }

        let cell_loss = |p: &[f64]| {
            let mut m = model.clone();
            m.cell.w.copy_from_slice(p);
            sample_loss(&m, &xs, label)
        };
        let head_loss = |p: &[f64]| {
            let mut m = model.clone();
            m.head.w.copy_from_slice(p);
            sample_loss(&m, &xs, label)
        };
        let cell_report = check_gradients(&cell_loss, &model.cell.w, &grads.cell, eps, tol);
        let head_report = check_gradients(&head_loss, &model.head.w, &grads.head, eps, tol);

        let passed = cell_report.passed && head_report.passed;
        max_rel_err = max_rel_err.max(cell_report.max_rel_err).max(head_report.max_rel_err);
        println!(
            "gradcheck {i}: h={h} d={d} t={t} k={k} depth={gate_depth} cell {:.3e} head {:.3e} {}",
            cell_report.max_rel_err,
            head_report.max_rel_err,
            if passed { "ok" } else { "FAIL" }
        );
        checks.push(InstanceCheck {
            instance: i,
            h,
            d,
            t,
            k,
            gate_depth,
            cell: TensorCheck { params: cell_report.n_checked, max_rel_err: cell_report.max_rel_err },
            head: TensorCheck { params: head_report.n_checked, max_rel_err: head_report.max_rel_err },
            passed,
        });
    }

    let passed = checks.iter().all(|c| c.passed) && !checks.is_empty();
    let run = GradCheckRun { instances: checks, eps, tol, max_rel_err, passed };
    let text = serde_json::to_string_pretty(&run)
        .map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    super::write_output(&cfg.out_dir, "gradcheck.json", text.as_bytes())?;

    if !passed {
        return Err(CliError::Internal(format!(
            "gradient check failed: max relative error {max_rel_err:.3e} at tolerance {tol:.1e}"
        )));
    }
    println!("gradcheck: {} instances passed, max relative error {max_rel_err:.3e}", run.instances.len());
    Ok(())
}
