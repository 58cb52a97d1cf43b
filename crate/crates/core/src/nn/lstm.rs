//! Peephole LSTM cell. Recurrence runs purely through the cell state: every
//! gate reads c_{t-1}, and no hidden output feeds back.
//!
//! gate_g = sigmoid(W_g x_t + U_g c_{t-1} + b_g)   for g in {input, forget, output}
//! c_t    = forget ∘ c_{t-1} + input ∘ tanh(W_c x_t + U_c c_{t-1} + b_c)
//! theta  = output ∘ tanh(c_t)
//!
//! With gate_depth > 1, each of the four pre-activations is pushed through
//! gate_depth−1 extra tanh dense layers before its outer activation.

use std::ops::Range;

use rand::Rng;

use super::linalg::{add_assign, matvec_add, matvec_transpose_add, outer_add};

/// Gate index order inside the flat parameter vector.
const GATES: usize = 4; // input, forget, output, candidate
const GATE_INPUT: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_OUTPUT: usize = 2;
const GATE_CAND: usize = 3;

/// All parameters of one cell in a single flat vector. Per gate, the layout
/// is W (h×d) | U (h×h) | b (h) | then per extra layer M (h×h) | d (h).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(
    into = "crate::nn::io::LstmTensors",
    try_from = "crate::nn::io::LstmTensors"
)]
pub struct LstmParams {
    pub h: usize,
    pub d: usize,
    pub gate_depth: usize,
    pub w: Vec<f64>,
}

impl LstmParams {
    /// Zero-initialized cell.
    pub fn zeros(h: usize, d: usize, gate_depth: usize) -> Self {
        assert!(h > 0 && d > 0 && gate_depth > 0);
        let mut p = LstmParams { h, d, gate_depth, w: Vec::new() };
        p.w = vec![0.0; p.len()];
        p
    }

    /// Weights uniform in ±1/√h, biases 0, except the forget gate's final
    /// bias at +1 so early training does not erase the cell state.
    pub fn init(h: usize, d: usize, gate_depth: usize, rng: &mut impl Rng) -> Self {
        let mut p = LstmParams::zeros(h, d, gate_depth);
        let bound = 1.0 / (h as f64).sqrt();
        for w in &mut p.w {
            *w = rng.gen_range(-bound..=bound);
        }
        for g in 0..GATES {
            p.slice_mut(p.bias(g)).fill(0.0);
            for l in 1..p.gate_depth {
                p.slice_mut(p.layer_bias(g, l)).fill(0.0);
            }
        }
        let forget_final = if gate_depth == 1 {
            p.bias(GATE_FORGET)
        } else {
            p.layer_bias(GATE_FORGET, gate_depth - 1)
        };
        p.slice_mut(forget_final).fill(1.0);
        p
    }

    /// Mutable view of one layout range; usable as
    /// `p.slice_mut(p.bias(g))` where direct indexing would fight the
    /// borrow checker.
    pub fn slice_mut(&mut self, r: Range<usize>) -> &mut [f64] {
        &mut self.w[r]
    }

    fn gate_block(&self) -> usize {
        let (h, d) = (self.h, self.d);
        h * d + h * h + h + (self.gate_depth - 1) * (h * h + h)
    }

    pub fn len(&self) -> usize {
        GATES * self.gate_block()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self, g: usize) -> Range<usize> {
        let base = g * self.gate_block();
        base..base + self.h * self.d
    }

    pub fn recurrent(&self, g: usize) -> Range<usize> {
        let base = g * self.gate_block() + self.h * self.d;
        base..base + self.h * self.h
    }

    pub fn bias(&self, g: usize) -> Range<usize> {
        let base = g * self.gate_block() + self.h * self.d + self.h * self.h;
        base..base + self.h
    }

    /// Extra layer weight matrix, l in 1..gate_depth.
    pub fn layer_weights(&self, g: usize, l: usize) -> Range<usize> {
        debug_assert!((1..self.gate_depth).contains(&l));
        let base = self.bias(g).end + (l - 1) * (self.h * self.h + self.h);
        base..base + self.h * self.h
    }

    pub fn layer_bias(&self, g: usize, l: usize) -> Range<usize> {
        let m = self.layer_weights(g, l);
        m.end..m.end + self.h
    }

    /// Pre-activation of gate `g`, recording chain activations when the gate
    /// is deep.
    fn preact(&self, g: usize, x: &[f64], c_prev: &[f64], chain: &mut Vec<Vec<f64>>) -> Vec<f64> {
        let mut z = self.w[self.bias(g)].to_vec();
        matvec_add(&self.w[self.weights(g)], x, &mut z);
        matvec_add(&self.w[self.recurrent(g)], c_prev, &mut z);
        for l in 1..self.gate_depth {
            let a: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            z = self.w[self.layer_bias(g, l)].to_vec();
            matvec_add(&self.w[self.layer_weights(g, l)], &a, &mut z);
            chain.push(a);
        }
        z
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs about one step.
#[derive(Debug, Clone)]
pub struct StepTape {
    x: Vec<f64>,
    c_prev: Vec<f64>,
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_o: Vec<f64>,
    cand: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Chain activations a^l per gate, empty at gate_depth 1.
    chains: [Vec<Vec<f64>>; 4],
}

/// One cell step: returns (c_t, theta).
pub fn lstm_step(p: &LstmParams, x: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (c, theta, _) = step_inner(p, x, c_prev);
    (c, theta)
}

fn step_inner(p: &LstmParams, x: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, StepTape) {
    assert_eq!(x.len(), p.d, "input dim");
    assert_eq!(c_prev.len(), p.h, "state dim");
    let mut chains: [Vec<Vec<f64>>; 4] = Default::default();
    let [zi, zf, zo, zc] = [GATE_INPUT, GATE_FORGET, GATE_OUTPUT, GATE_CAND].map(|g| {
        let mut chain = Vec::new();
        let z = p.preact(g, x, c_prev, &mut chain);
        chains[g] = chain;
        z
    });
    let gate_i: Vec<f64> = zi.iter().map(|&v| sigmoid(v)).collect();
    let gate_f: Vec<f64> = zf.iter().map(|&v| sigmoid(v)).collect();
    let gate_o: Vec<f64> = zo.iter().map(|&v| sigmoid(v)).collect();
    let cand: Vec<f64> = zc.iter().map(|&v| v.tanh()).collect();
    let c: Vec<f64> = (0..p.h)
        .map(|j| gate_f[j] * c_prev[j] + gate_i[j] * cand[j])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
    let theta: Vec<f64> = (0..p.h).map(|j| gate_o[j] * tanh_c[j]).collect();
    let tape = StepTape {
        x: x.to_vec(),
        c_prev: c_prev.to_vec(),
        gate_i,
        gate_f,
        gate_o,
        cand,
        tanh_c,
        chains,
    };
    (c, theta, tape)
}

/// Fold the cell over a sequence. Returns all thetas and the final state.
pub fn lstm_forward(
    p: &LstmParams,
    xs: &[impl AsRef<[f64]>],
    c0: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut c = c0.to_vec();
    let mut thetas = Vec::with_capacity(xs.len());
    for x in xs {
        let (c_next, theta) = lstm_step(p, x.as_ref(), &c);
        c = c_next;
        thetas.push(theta);
    }
    (thetas, c)
}

/// [`lstm_forward`] that also records the tape for [`lstm_backward`].
pub fn lstm_forward_taped(
    p: &LstmParams,
    xs: &[impl AsRef<[f64]>],
    c0: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<StepTape>) {
    let mut c = c0.to_vec();
    let mut thetas = Vec::with_capacity(xs.len());
    let mut tapes = Vec::with_capacity(xs.len());
    for x in xs {
        let (c_next, theta, tape) = step_inner(p, x.as_ref(), &c);
        c = c_next;
        thetas.push(theta);
        tapes.push(tape);
    }
    (thetas, c, tapes)
}

/// Reverse one step. `dtheta` is this step's output gradient, `dc` the
/// gradient flowing back into c_t; returns the gradient w.r.t. c_{t-1}.
/// Parameter gradients accumulate into `grads` (same layout as `p.w`).
fn step_backward(
    p: &LstmParams,
    tape: &StepTape,
    dtheta: &[f64],
    mut dc: Vec<f64>,
    grads: &mut [f64],
) -> Vec<f64> {
    let h = p.h;
    let StepTape { x, c_prev, gate_i, gate_f, gate_o, cand, tanh_c, chains } = tape;

    // theta = o ∘ tanh(c): split dtheta into the gate and state paths.
    let mut dz_o = vec![0.0; h];
    for j in 0..h {
        let d_o = dtheta[j] * tanh_c[j];
        dz_o[j] = d_o * gate_o[j] * (1.0 - gate_o[j]);
        dc[j] += dtheta[j] * gate_o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
    }

    // c = f ∘ c_prev + i ∘ cand.
    let mut dz_i = vec![0.0; h];
    let mut dz_f = vec![0.0; h];
    let mut dz_c = vec![0.0; h];
    let mut dc_prev: Vec<f64> = (0..h).map(|j| dc[j] * gate_f[j]).collect();
    for j in 0..h {
        dz_i[j] = dc[j] * cand[j] * gate_i[j] * (1.0 - gate_i[j]);
        dz_f[j] = dc[j] * c_prev[j] * gate_f[j] * (1.0 - gate_f[j]);
        dz_c[j] = dc[j] * gate_i[j] * (1.0 - cand[j] * cand[j]);
    }

    for (g, mut dz) in [
        (GATE_INPUT, dz_i),
        (GATE_FORGET, dz_f),
        (GATE_OUTPUT, dz_o),
        (GATE_CAND, dz_c),
    ] {
        // Deep-gate chain, outermost layer first.
        for l in (1..p.gate_depth).rev() {
            let a = &chains[g][l - 1];
            outer_add(&dz, a, &mut grads[p.layer_weights(g, l)]);
            add_assign(&mut grads[p.layer_bias(g, l)], &dz);
            let mut da = vec![0.0; h];
            matvec_transpose_add(&p.w[p.layer_weights(g, l)], &dz, &mut da);
            for j in 0..h {
                da[j] *= 1.0 - a[j] * a[j];
            }
            dz = da;
        }
        outer_add(&dz, x, &mut grads[p.weights(g)]);
        outer_add(&dz, c_prev, &mut grads[p.recurrent(g)]);
        add_assign(&mut grads[p.bias(g)], &dz);
        matvec_transpose_add(&p.w[p.recurrent(g)], &dz, &mut dc_prev);
    }
    dc_prev
}

/// Backpropagate through a taped sequence. `dthetas[t]` is the output
/// gradient at step t; `dc_final` flows into the last cell state. Returns
/// the gradient w.r.t. c0 (which chains into an upstream cell, if any).
pub fn lstm_backward(
    p: &LstmParams,
    tapes: &[StepTape],
    dthetas: &[Vec<f64>],
    dc_final: &[f64],
    grads: &mut [f64],
) -> Vec<f64> {
    assert_eq!(tapes.len(), dthetas.len());
    let mut dc = dc_final.to_vec();
    for (tape, dtheta) in tapes.iter().zip(dthetas).rev() {
        dc = step_backward(p, tape, dtheta, dc, grads);
    }
    dc
}
