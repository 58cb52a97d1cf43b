//! From-scratch neural network pieces: a peephole LSTM cell whose gates read
//! the previous cell state (no hidden-state recurrence), dense/softmax output
//! layers, backpropagation through time, Adam, and finite-difference
//! gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod head;
pub mod io;
pub mod linalg;
pub mod lstm;

use thiserror::Error;

pub use adam::{
    adam_step, clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_LR, CLIP_NORM,
};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use head::{softmax, softmax_xent, DenseParams};
pub use io::Tensor;
pub use lstm::{
    lstm_backward, lstm_forward, lstm_forward_taped, lstm_step, LstmParams, StepTape,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {0}")]
    ShapeMismatch(&'static str),
    #[error("bad tensor {0}")]
    BadTensor(String),
}

/// One LSTM cell with a dense softmax head over its final theta: the
/// smallest complete trainable model, used directly by gradient checks.
#[derive(Debug, Clone)]
pub struct SeqClassifier {
    pub cell: LstmParams,
    pub head: DenseParams,
}

/// Gradients of a [`SeqClassifier`], same flat layouts as the parameters.
#[derive(Debug, Clone)]
pub struct SeqGrads {
    pub cell: Vec<f64>,
    pub head: Vec<f64>,
}

impl SeqClassifier {
    pub fn forward(&self, xs: &[impl AsRef<[f64]>]) -> Vec<f64> {
        let c0 = vec![0.0; self.cell.h];
        let (thetas, _) = lstm_forward(&self.cell, xs, &c0);
        let final_theta = thetas.last().cloned().unwrap_or_else(|| vec![0.0; self.cell.h]);
        softmax(&self.head.logits(&final_theta))
    }
}

/// Loss and exact gradients of one sample, reverse-mode through the head and
/// every unrolled step.
pub fn bptt_grads(
    model: &SeqClassifier,
    xs: &[impl AsRef<[f64]>],
    label: usize,
) -> (f64, SeqGrads) {
    bptt_grads_scaled(model, xs, label, 1.0)
}

/// [`bptt_grads`] with the loss multiplied by `scale`; gradients scale
/// linearly with it.
pub fn bptt_grads_scaled(
    model: &SeqClassifier,
    xs: &[impl AsRef<[f64]>],
    label: usize,
    scale: f64,
) -> (f64, SeqGrads) {
    let h = model.cell.h;
    let c0 = vec![0.0; h];
    let (thetas, _, tapes) = lstm_forward_taped(&model.cell, xs, &c0);
    let final_theta = thetas.last().cloned().unwrap_or_else(|| vec![0.0; h]);

    let logits = model.head.logits(&final_theta);
    let (loss, mut dlogits) = softmax_xent(&logits, label);
    for d in &mut dlogits {
        *d *= scale;
    }

    let mut grads = SeqGrads {
        cell: vec![0.0; model.cell.len()],
        head: vec![0.0; model.head.len()],
    };
    let dtheta_final = model
        .head
        .backward(&final_theta, &dlogits, &mut grads.head);

    let mut dthetas = vec![vec![0.0; h]; tapes.len()];
    if let Some(last) = dthetas.last_mut() {
        *last = dtheta_final;
    }
    let dc_final = vec![0.0; h];
    lstm_backward(&model.cell, &tapes, &dthetas, &dc_final, &mut grads.cell);
    (loss * scale, grads)
}
