//! Per-application activity classifiers: one deep-gated LSTM cell over the
//! pooled sequence read newest-first, conditioned on the application
//! classifier's softmax and final cell state, which are appended to every
//! step input as constants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::linalg::add_assign;
use crate::nn::{
    lstm_backward, lstm_forward, lstm_forward_taped, DenseParams, LstmParams, StepTape,
};
use crate::preprocess::{ENTRY_DIM, POOLED_LEN};

use super::{HIDDEN, K_APP};

/// Step input width: pooled entry, app softmax, app final cell state.
pub const ACT_INPUT_DIM: usize = ENTRY_DIM + K_APP + HIDDEN;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivityClassifier {
    /// Application this classifier belongs to.
    pub app: String,
    /// Activity names, in label order.
    pub classes: Vec<String>,
    pub cell: LstmParams,
    pub head: DenseParams,
}

impl ActivityClassifier {
    pub fn zeros(app: &str, classes: &[&str], gate_depth: usize) -> Self {
        ActivityClassifier {
            app: app.to_string(),
            classes: classes.iter().map(|s| s.to_string()).collect(),
            cell: LstmParams::zeros(HIDDEN, ACT_INPUT_DIM, gate_depth),
            head: DenseParams::zeros(classes.len(), HIDDEN),
        }
    }

    pub fn init(app: &str, classes: &[&str], gate_depth: usize, rng: &mut impl Rng) -> Self {
        ActivityClassifier {
            app: app.to_string(),
            classes: classes.iter().map(|s| s.to_string()).collect(),
            cell: LstmParams::init(HIDDEN, ACT_INPUT_DIM, gate_depth, rng),
            head: DenseParams::init(classes.len(), HIDDEN, rng),
        }
    }
}

/// Build the step inputs: the pooled sequence newest-first, each step
/// extended with the (constant) app softmax and final cell state. The app
/// outputs are treated as data here; no gradient flows back through them.
pub fn activity_inputs(
    pooled: &[[f64; ENTRY_DIM]],
    app_softmax: &[f64],
    app_cell: &[f64],
) -> Vec<Vec<f64>> {
    assert_eq!(pooled.len(), POOLED_LEN);
    assert_eq!(app_softmax.len(), K_APP);
    assert_eq!(app_cell.len(), HIDDEN);
    pooled
        .iter()
        .rev()
        .map(|entry| {
            let mut x = Vec::with_capacity(ACT_INPUT_DIM);
            x.extend_from_slice(entry);
            x.extend_from_slice(app_softmax);
            x.extend_from_slice(app_cell);
            x
        })
        .collect()
}

pub fn activity_forward(
    model: &ActivityClassifier,
    pooled: &[[f64; ENTRY_DIM]],
    app_softmax: &[f64],
    app_cell: &[f64],
) -> Vec<f64> {
    let xs = activity_inputs(pooled, app_softmax, app_cell);
    let c0 = vec![0.0; HIDDEN];
    let (thetas, _) = lstm_forward(&model.cell, &xs, &c0);
    let final_theta = thetas.last().expect("pooled sequences are non-empty");
    crate::nn::softmax(&model.head.logits(final_theta))
}

/// Gradient buffers matching an `ActivityClassifier`.
#[derive(Debug, Clone)]
pub struct ActivityGrads {
    pub cell: Vec<f64>,
    pub head: Vec<f64>,
}

impl ActivityGrads {
    pub fn zeros(model: &ActivityClassifier) -> Self {
        ActivityGrads { cell: vec![0.0; model.cell.len()], head: vec![0.0; model.head.len()] }
    }

    pub fn add_assign(&mut self, other: &ActivityGrads) {
        add_assign(&mut self.cell, &other.cell);
        add_assign(&mut self.head, &other.head);
    }

    pub fn scale(&mut self, s: f64) {
        self.cell.iter_mut().for_each(|v| *v *= s);
        self.head.iter_mut().for_each(|v| *v *= s);
    }
}

pub struct ActivityTape {
    pub tapes: Vec<StepTape>,
    pub final_theta: Vec<f64>,
    pub logits: Vec<f64>,
    pub softmax: Vec<f64>,
}

pub fn activity_forward_taped(
    model: &ActivityClassifier,
    pooled: &[[f64; ENTRY_DIM]],
    app_softmax: &[f64],
    app_cell: &[f64],
) -> ActivityTape {
    let xs = activity_inputs(pooled, app_softmax, app_cell);
    let c0 = vec![0.0; HIDDEN];
    let (thetas, _, tapes) = lstm_forward_taped(&model.cell, &xs, &c0);
    let final_theta = thetas.last().expect("pooled sequences are non-empty").clone();
    let logits = model.head.logits(&final_theta);
    let softmax = crate::nn::softmax(&logits);
    ActivityTape { tapes, final_theta, logits, softmax }
}

/// Cross-entropy loss against `label` and parameter gradients, scaled by
/// `scale`.
pub fn activity_loss_grads(
    model: &ActivityClassifier,
    tape: &ActivityTape,
    label: usize,
    scale: f64,
    grads: &mut ActivityGrads,
) -> f64 {
    let (loss, mut dlogits) = crate::nn::softmax_xent(&tape.logits, label);
    dlogits.iter_mut().for_each(|v| *v *= scale);
    let dtheta_final = model.head.backward(&tape.final_theta, &dlogits, &mut grads.head);

    let mut dthetas = vec![vec![0.0; HIDDEN]; tape.tapes.len()];
    *dthetas.last_mut().unwrap() = dtheta_final;
    let dc_final = vec![0.0; HIDDEN];
    lstm_backward(&model.cell, &tape.tapes, &dthetas, &dc_final, &mut grads.cell);
    loss * scale
}
