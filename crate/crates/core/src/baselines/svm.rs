//! One-vs-rest linear SVM trained by stochastic subgradient descent on the
//! hinge loss. Features are standardized inside the model, since the raw
//! flow statistics span several orders of magnitude.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::util::substream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub lambda: f64,
    /// Per-class weight vector over standardized features.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Standardization learned from the training set.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl LinearSvmModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Per-class decision values w·x + b on standardized features.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.w
            .iter()
            .zip(&self.b)
            .map(|(w, b)| w.iter().zip(&z).map(|(wi, zi)| wi * zi).sum::<f64>() + b)
            .collect()
    }

    /// Argmax decision value, lowest class index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let d = self.decision(x);
        let mut best = 0;
        for (i, &v) in d.iter().enumerate().skip(1) {
            if v > d[best] {
                best = i;
            }
        }
        best
    }
}

/// Regularized empirical hinge objective for one binary problem:
/// λ/2 ||w||² + mean_i max(0, 1 − y_i (w·x_i + b)).
pub fn svm_objective(w: &[f64], b: f64, lambda: f64, data: &[Vec<f64>], y: &[f64]) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = data
        .iter()
        .zip(y)
        .map(|(x, yi)| {
            let f = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            (1.0 - yi * f).max(0.0)
        })
        .sum();
    reg + loss / data.len() as f64
}

/// Full-batch subgradient of [`svm_objective`]: margin violators contribute
/// −y·x / n to dW and −y / n to db; the regularizer adds λw.
pub fn svm_subgradient(
    w: &[f64],
    b: f64,
    lambda: f64,
    data: &[Vec<f64>],
    y: &[f64],
) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut dw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut db = 0.0;
    for (x, yi) in data.iter().zip(y) {
        let f = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
        if yi * f < 1.0 {
            for (dwj, xj) in dw.iter_mut().zip(x) {
                *dwj -= yi * xj / n;
            }
            db -= yi / n;
        }
    }
    (dw, db)
}

/// Train one-vs-rest linear SVMs with a decaying-step stochastic
/// subgradient scheme (step 1/(λt) at update t; bias unregularized).
pub fn svm_train(
    data: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> LinearSvmModel {
    assert_eq!(data.len(), labels.len());
    assert!(!data.is_empty(), "svm needs training data");
    assert!(lambda > 0.0);
    let d = data[0].len();
    let n = data.len();

    // Standardize once. Constant features (min == max, an exact test that
    // accumulated variance is not) get that constant as mean and unit scale,
    // so they map to exactly zero.
    let mut mean = vec![0.0; d];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    let mut std = vec![0.0; d];
    for x in data {
        for (s, (v, m)) in std.iter_mut().zip(x.iter().zip(&mean)) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut std {
        *s = s.sqrt();
    }
    for j in 0..d {
        let lo = data.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
        let hi = data.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            mean[j] = lo;
            std[j] = 1.0;
        }
    }
    let z: Vec<Vec<f64>> = data
        .iter()
        .map(|x| {
            x.iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();

    // One binary problem per class, independent RNG streams so the class
    // loop could run in parallel without changing results.
    let problems = crate::par::map_indices(n_classes, |k| {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let mut rng = substream(seed, &format!("svm/class/{k}"));
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0u64;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let f = w.iter().zip(&z[i]).map(|(wi, zi)| wi * zi).sum::<f64>() + b;
                let shrink = 1.0 - eta * lambda;
                for wj in &mut w {
                    *wj *= shrink;
                }
                if y[i] * f < 1.0 {
                    for (wj, zj) in w.iter_mut().zip(&z[i]) {
                        *wj += eta * y[i] * zj;
                    }
                    b += eta * y[i];
                }
            }
        }
        (w, b)
    });

    LinearSvmModel {
        n_classes,
        n_features: d,
        lambda,
        w: problems.iter().map(|(w, _)| w.clone()).collect(),
        b: problems.iter().map(|(_, b)| *b).collect(),
        feature_mean: mean,
        feature_std: std,
    }
}
