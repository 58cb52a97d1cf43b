//! Application classifier: four LSTM cells, each reading its own share of
//! the pooled sequence newest-first, chained through the cell state, with a
//! dense softmax head over the concatenated final outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::linalg::add_assign;
use crate::nn::{
    lstm_backward, lstm_forward, lstm_forward_taped, DenseParams, LstmParams, StepTape,
};
use crate::preprocess::{BLOCKS, ENTRY_DIM, POOLED_LEN};

use super::{HIDDEN, K_APP};

pub const N_CELLS: usize = 4;
/// Entries per pooled block.
const BLOCK_LEN: usize = POOLED_LEN / BLOCKS;

/// Which pooled blocks each cell consumes, in consumption order. The
/// default hands the two newest (coarsest) blocks to the first cell and
/// walks back to the packet-resolution blocks, so the chained cell state
/// sees a coarse summary before the fine detail.
pub fn default_block_assignment() -> Vec<Vec<usize>> {
    vec![vec![7, 6], vec![5, 4], vec![3, 2], vec![1, 0]]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppClassifier {
    pub cells: Vec<LstmParams>,
    pub head: DenseParams,
    pub block_assignment: Vec<Vec<usize>>,
}

impl AppClassifier {
    pub fn zeros(gate_depth: usize) -> Self {
        AppClassifier {
            cells: (0..N_CELLS)
                .map(|_| LstmParams::zeros(HIDDEN, ENTRY_DIM, gate_depth))
                .collect(),
            head: DenseParams::zeros(K_APP, N_CELLS * HIDDEN),
            block_assignment: default_block_assignment(),
        }
    }

    pub fn init(gate_depth: usize, rng: &mut impl Rng) -> Self {
        AppClassifier {
            cells: (0..N_CELLS)
                .map(|_| LstmParams::init(HIDDEN, ENTRY_DIM, gate_depth, rng))
                .collect(),
            head: DenseParams::init(K_APP, N_CELLS * HIDDEN, rng),
            block_assignment: default_block_assignment(),
        }
    }

    /// The pooled entries cell `k` consumes, each block reversed so entries
    /// run newest to oldest.
    pub fn cell_sequence(&self, pooled: &[[f64; ENTRY_DIM]], k: usize) -> Vec<[f64; ENTRY_DIM]> {
        assert_eq!(pooled.len(), POOLED_LEN);
        let mut seq = Vec::with_capacity(self.block_assignment[k].len() * BLOCK_LEN);
        for &b in &self.block_assignment[k] {
            seq.extend(pooled[b * BLOCK_LEN..(b + 1) * BLOCK_LEN].iter().rev().copied());
        }
        seq
    }
}

/// Forward outputs kept by downstream consumers: the activity classifiers
/// condition on the softmax and the last cell's final state.
#[derive(Debug, Clone)]
pub struct AppForward {
    pub softmax: Vec<f64>,
    pub logits: Vec<f64>,
    /// Final output of each cell, concatenated in cell order (head input).
    pub thetas: Vec<f64>,
    /// Final cell state of each cell.
    pub cells: Vec<Vec<f64>>,
}

impl AppForward {
    /// Final state of the last cell in the chain.
    pub fn final_cell(&self) -> Vec<f64> {
        self.cells.last().cloned().unwrap_or_default()
    }
}

pub fn app_forward(model: &AppClassifier, pooled: &[[f64; ENTRY_DIM]]) -> AppForward {
    let mut thetas = Vec::with_capacity(N_CELLS * HIDDEN);
    let mut cells = Vec::with_capacity(N_CELLS);
    let mut c = vec![0.0; HIDDEN];
    for (k, p) in model.cells.iter().enumerate() {
        let seq = model.cell_sequence(pooled, k);
        let (step_thetas, c_next) = lstm_forward(p, &seq, &c);
        thetas.extend_from_slice(step_thetas.last().expect("blocks are non-empty"));
        cells.push(c_next.clone());
        c = c_next;
    }
    let logits = model.head.logits(&thetas);
    let softmax = crate::nn::softmax(&logits);
    AppForward { softmax, logits, thetas, cells }
}

/// Everything the backward pass needs from one forward run.
pub struct AppTape {
    pub tapes: Vec<Vec<StepTape>>,
    pub fwd: AppForward,
}

pub fn app_forward_taped(model: &AppClassifier, pooled: &[[f64; ENTRY_DIM]]) -> AppTape {
    let mut tapes = Vec::with_capacity(N_CELLS);
    let mut thetas = Vec::with_capacity(N_CELLS * HIDDEN);
    let mut cells = Vec::with_capacity(N_CELLS);
    let mut c = vec![0.0; HIDDEN];
    for (k, p) in model.cells.iter().enumerate() {
        let seq = model.cell_sequence(pooled, k);
        let (step_thetas, c_next, tape) = lstm_forward_taped(p, &seq, &c);
        thetas.extend_from_slice(step_thetas.last().expect("blocks are non-empty"));
        cells.push(c_next.clone());
        c = c_next;
        tapes.push(tape);
    }
    let logits = model.head.logits(&thetas);
    let softmax = crate::nn::softmax(&logits);
    AppTape { tapes, fwd: AppForward { softmax, logits, thetas, cells } }
}

/// Gradient buffers matching an `AppClassifier`, flat per tensor.
#[derive(Debug, Clone)]
pub struct AppGrads {
    pub cells: Vec<Vec<f64>>,
    pub head: Vec<f64>,
}

impl AppGrads {
    pub fn zeros(model: &AppClassifier) -> Self {
        AppGrads {
            cells: model.cells.iter().map(|c| vec![0.0; c.len()]).collect(),
            head: vec![0.0; model.head.len()],
        }
    }

    pub fn add_assign(&mut self, other: &AppGrads) {
        for (mine, theirs) in self.cells.iter_mut().zip(&other.cells) {
            add_assign(mine, theirs);
        }
        add_assign(&mut self.head, &other.head);
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.cells {
            g.iter_mut().for_each(|v| *v *= s);
        }
        self.head.iter_mut().for_each(|v| *v *= s);
    }
}

/// Cross-entropy loss against `label` and gradients for every parameter,
/// scaled by `scale`. Gradient flow follows the chain: the head feeds each
/// cell's final output, and each cell's initial-state gradient flows into
/// the previous cell's final state.
pub fn app_loss_grads(
    model: &AppClassifier,
    pooled: &[[f64; ENTRY_DIM]],
    label: usize,
    scale: f64,
    grads: &mut AppGrads,
) -> (f64, AppTape) {
    let tape = app_forward_taped(model, pooled);
    let (loss, mut dlogits) = crate::nn::softmax_xent(&tape.fwd.logits, label);
    dlogits.iter_mut().for_each(|v| *v *= scale);
    let dthetas_flat = model.head.backward(&tape.fwd.thetas, &dlogits, &mut grads.head);

    // Walk the chain backwards; dc_final of cell k comes from cell k+1's
    // initial state.
    let mut dc_final = vec![0.0; HIDDEN];
    for k in (0..N_CELLS).rev() {
        let steps = tape.tapes[k].len();
        let mut dthetas = vec![vec![0.0; HIDDEN]; steps];
        dthetas[steps - 1].copy_from_slice(&dthetas_flat[k * HIDDEN..(k + 1) * HIDDEN]);
        dc_final = lstm_backward(
            &model.cells[k],
            &tape.tapes[k],
            &dthetas,
            &dc_final,
            &mut grads.cells[k],
        );
    }
    (loss * scale, tape)
}
