//! Dense output layer and the softmax cross-entropy loss.

use rand::Rng;

use super::linalg::{matvec_add, matvec_transpose_add, outer_add};

/// Dense layer mapping an h-vector to k logits. Flat layout: W (k×h) | b (k).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(
    into = "crate::nn::io::DenseTensors",
    try_from = "crate::nn::io::DenseTensors"
)]
pub struct DenseParams {
    pub k: usize,
    pub h: usize,
    pub w: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(k: usize, h: usize) -> Self {
        assert!(k > 0 && h > 0);
        DenseParams { k, h, w: vec![0.0; k * h + k] }
    }

    /// Weights uniform in ±1/√h (the fan-in), biases 0.
    pub fn init(k: usize, h: usize, rng: &mut impl Rng) -> Self {
        let mut p = DenseParams::zeros(k, h);
        let bound = 1.0 / (h as f64).sqrt();
        for w in &mut p.w[..k * h] {
            *w = rng.gen_range(-bound..=bound);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.k * self.h + self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight_slice(&self) -> &[f64] {
        &self.w[..self.k * self.h]
    }

    pub fn bias_slice(&self) -> &[f64] {
        &self.w[self.k * self.h..]
    }

    pub fn logits(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.h, "dense input dim");
        let mut out = self.bias_slice().to_vec();
        matvec_add(self.weight_slice(), input, &mut out);
        out
    }

    /// Accumulate dW/db into `grads` (same layout) and return dinput.
    pub fn backward(&self, input: &[f64], dlogits: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.len());
        let split = self.k * self.h;
        outer_add(dlogits, input, &mut grads[..split]);
        for (g, d) in grads[split..].iter_mut().zip(dlogits) {
            *g += d;
        }
        let mut dinput = vec![0.0; self.h];
        matvec_transpose_add(self.weight_slice(), dlogits, &mut dinput);
        dinput
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// Cross-entropy of softmax(logits) against `label`; returns the loss and
/// dloss/dlogits = softmax − onehot.
pub fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label out of range");
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    let loss = z.ln() + m - logits[label];
    let mut dlogits = softmax(logits);
    dlogits[label] -= 1.0;
    (loss, dlogits)
}
