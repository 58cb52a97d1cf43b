//! Mini-batch training for the application and activity classifiers.
//!
//! Batches are drawn class-uniformly with replacement. Per-sample gradients
//! are computed in parallel, then combined by a fixed-order fold so the
//! update is bit-identical regardless of worker count. The activity
//! classifiers train on the true application's samples within each batch;
//! the app model's outputs enter them as constants, so no gradient crosses
//! the app/activity boundary.

use std::collections::BTreeMap;

use rand::Rng;

use crate::nn::{
    adam_step, clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_LR, CLIP_NORM,
};
use crate::preprocess::{DELAY_CAP_SECS, SIZE_CAP};
use crate::util::substream;

use super::activity::{activity_forward_taped, activity_loss_grads, ActivityGrads};
use super::app::{app_loss_grads, AppGrads};
use super::bundle::{BundleMeta, ModelBundle};
use super::{
    ActivityClassifier, AppClassifier, Dataset, ModelError, APP_CLASSES, DEFAULT_TAU, K_APP,
};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub n_batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub gate_depth: usize,
    pub tau: f64,
    pub seed: u64,
    /// Recorded in the bundle so eval-time featurization matches.
    pub size_cap: u32,
    pub delay_cap_secs: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_batches: 2000,
            batch_size: 50,
            lr: ADAM_LR,
            gate_depth: 1,
            tau: DEFAULT_TAU,
            seed: 0,
            size_cap: SIZE_CAP,
            delay_cap_secs: DELAY_CAP_SECS,
        }
    }
}

/// Loss curves from one training run.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct TrainReport {
    /// Mean app cross-entropy per batch.
    pub app_loss: Vec<f64>,
    /// Mean activity cross-entropy per batch, per app; batches where the
    /// draw contained no usable sample for the app are skipped.
    pub activity_loss: BTreeMap<String, Vec<f64>>,
    /// Pre-clip gradient norms of the app model, one per batch.
    pub app_grad_norm: Vec<f64>,
}

/// Per-sample output of the parallel gradient pass.
struct SampleGrads {
    app: AppGrads,
    app_loss: f64,
    /// (app index, grads, loss) when the sample feeds an activity model.
    act: Option<(usize, ActivityGrads, f64)>,
}

/// Adam moments for every tensor in the bundle.
struct Moments {
    app_cells: Vec<AdamState>,
    app_head: AdamState,
    act: BTreeMap<String, (AdamState, AdamState)>,
}

/// Train a fresh bundle on `dataset`. Every class listed in the vocabulary
/// must be populated; activity apps additionally need every activity
/// populated so the class-uniform draw is well defined end to end.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(ModelBundle, TrainReport), ModelError> {
    let by_app = dataset.by_app();
    for (k, ids) in by_app.iter().enumerate() {
        if ids.is_empty() {
            return Err(ModelError::EmptyClass(APP_CLASSES[k].to_string()));
        }
    }
    for (app, acts) in super::APP_ACTIVITIES {
        let k = super::app_index(app).unwrap();
        for (a, _) in acts.iter().enumerate() {
            if !by_app[k].iter().any(|&i| dataset.samples[i].activity == Some(a)) {
                return Err(ModelError::EmptyClass(format!("{app}/{}", acts[a])));
            }
        }
    }

    let mut rng = substream(cfg.seed, "train/init");
    let mut app_model = AppClassifier::init(cfg.gate_depth, &mut rng);
    let mut act_models: BTreeMap<String, ActivityClassifier> = super::APP_ACTIVITIES
        .iter()
        .map(|(app, acts)| {
            (app.to_string(), ActivityClassifier::init(app, acts, cfg.gate_depth, &mut rng))
        })
        .collect();

    let mut moments = Moments {
        app_cells: app_model.cells.iter().map(|c| AdamState::new(c.len())).collect(),
        app_head: AdamState::new(app_model.head.len()),
        act: act_models
            .iter()
            .map(|(name, m)| {
                (name.clone(), (AdamState::new(m.cell.len()), AdamState::new(m.head.len())))
            })
            .collect(),
    };

    let mut report = TrainReport::default();
    let mut batch_rng = substream(cfg.seed, "train/batches");

    for _ in 0..cfg.n_batches {
        // Draw the batch sequentially so the stream of random numbers is
        // independent of how the gradient pass is scheduled.
        let batch: Vec<usize> = (0..cfg.batch_size)
            .map(|_| {
                let class = batch_rng.gen_range(0..K_APP);
                let ids = &by_app[class];
                ids[batch_rng.gen_range(0..ids.len())]
            })
            .collect();

        let outs = crate::par::map_collect(&batch, |&i| {
            sample_grads(&app_model, &act_models, dataset, i)
        });

        apply_batch(&mut app_model, &mut act_models, &mut moments, outs, cfg, &mut report);
    }

    let meta = BundleMeta {
        app_classes: APP_CLASSES.iter().map(|s| s.to_string()).collect(),
        tau: cfg.tau,
        size_cap: cfg.size_cap,
        delay_cap_secs: cfg.delay_cap_secs,
        seed: cfg.seed,
        gate_depth: cfg.gate_depth,
        n_batches: cfg.n_batches,
        batch_size: cfg.batch_size,
    };
    Ok((ModelBundle { app: app_model, activities: act_models, meta }, report))
}

fn sample_grads(
    app_model: &AppClassifier,
    act_models: &BTreeMap<String, ActivityClassifier>,
    dataset: &Dataset,
    i: usize,
) -> SampleGrads {
    let sample = &dataset.samples[i];
    let mut app = AppGrads::zeros(app_model);
    let (app_loss, tape) = app_loss_grads(app_model, &sample.pooled, sample.app, 1.0, &mut app);

    let act = sample.activity.and_then(|label| {
        act_models.get(APP_CLASSES[sample.app]).map(|m| {
            let act_tape = activity_forward_taped(
                m,
                &sample.pooled,
                &tape.fwd.softmax,
                &tape.fwd.final_cell(),
            );
            let mut grads = ActivityGrads::zeros(m);
            let loss = activity_loss_grads(m, &act_tape, label, 1.0, &mut grads);
            (sample.app, grads, loss)
        })
    });
    SampleGrads { app, app_loss, act }
}

fn apply_batch(
    app_model: &mut AppClassifier,
    act_models: &mut BTreeMap<String, ActivityClassifier>,
    moments: &mut Moments,
    outs: Vec<SampleGrads>,
    cfg: &TrainConfig,
    report: &mut TrainReport,
) {
    let n = outs.len();
    let mut app_sum = AppGrads::zeros(app_model);
    let mut app_loss_sum = 0.0;
    let mut act_sums: BTreeMap<usize, (ActivityGrads, f64, usize)> = BTreeMap::new();

    // Fixed-order fold over the ordered results.
    for out in outs {
        app_sum.add_assign(&out.app);
        app_loss_sum += out.app_loss;
        if let Some((app_idx, grads, loss)) = out.act {
            match act_sums.get_mut(&app_idx) {
                Some((sum, loss_sum, count)) => {
                    sum.add_assign(&grads);
                    *loss_sum += loss;
                    *count += 1;
                }
                None => {
                    act_sums.insert(app_idx, (grads, loss, 1));
                }
            }
        }
    }

    app_sum.scale(1.0 / n as f64);
    report.app_loss.push(app_loss_sum / n as f64);
    {
        let mut tensors: Vec<&mut [f64]> =
            app_sum.cells.iter_mut().map(|g| g.as_mut_slice()).collect();
        tensors.push(app_sum.head.as_mut_slice());
        report.app_grad_norm.push(clip_global_norm(&mut tensors, CLIP_NORM));
    }
    for (cell, (grads, state)) in app_model
        .cells
        .iter_mut()
        .zip(app_sum.cells.iter().zip(moments.app_cells.iter_mut()))
    {
        adam_step(&mut cell.w, grads, state, cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
    }
    adam_step(
        &mut app_model.head.w,
        &app_sum.head,
        &mut moments.app_head,
        cfg.lr,
        ADAM_BETA1,
        ADAM_BETA2,
        ADAM_EPS,
    );

    for (app_idx, (mut grads, loss_sum, count)) in act_sums {
        let name = APP_CLASSES[app_idx];
        let model = act_models.get_mut(name).expect("grads only for known activity models");
        grads.scale(1.0 / count as f64);
        clip_global_norm(&mut [grads.cell.as_mut_slice(), grads.head.as_mut_slice()], CLIP_NORM);
        let (cell_state, head_state) = moments.act.get_mut(name).unwrap();
        adam_step(&mut model.cell.w, &grads.cell, cell_state, cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        adam_step(&mut model.head.w, &grads.head, head_state, cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        report.activity_loss.entry(name.to_string()).or_default().push(loss_sum / count as f64);
    }
}
