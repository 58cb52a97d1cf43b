//! JSON tensor serialization: every parameter block becomes a named
//! `{"shape": [...], "data": [row-major]}` object, keyed in sorted order so
//! output bytes are deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DenseParams, LstmParams, NnError};

const GATE_NAMES: [&str; 4] = ["input", "forget", "output", "cand"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    fn take(
        tensors: &mut BTreeMap<String, Tensor>,
        name: &str,
        shape: &[usize],
    ) -> Result<Vec<f64>, NnError> {
        let t = tensors
            .remove(name)
            .ok_or_else(|| NnError::BadTensor(format!("missing {name}")))?;
        if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
            return Err(NnError::BadTensor(format!(
                "{name}: shape {:?}, want {:?}",
                t.shape, shape
            )));
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::BadTensor(format!("{name}: non-finite entry")));
        }
        Ok(t.data)
    }
}

/// Serialized form of [`LstmParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmTensors {
    pub h: usize,
    pub d: usize,
    pub gate_depth: usize,
    pub tensors: BTreeMap<String, Tensor>,
}

impl From<LstmParams> for LstmTensors {
    fn from(p: LstmParams) -> Self {
        let mut tensors = BTreeMap::new();
        for (g, name) in GATE_NAMES.iter().enumerate() {
            let grab = |r: std::ops::Range<usize>| p.w[r].to_vec();
            tensors.insert(
                format!("{name}.w"),
                Tensor::new(vec![p.h, p.d], grab(p.weights(g))),
            );
            tensors.insert(
                format!("{name}.u"),
                Tensor::new(vec![p.h, p.h], grab(p.recurrent(g))),
            );
            tensors.insert(format!("{name}.b"), Tensor::new(vec![p.h], grab(p.bias(g))));
            for l in 1..p.gate_depth {
                tensors.insert(
                    format!("{name}.m{l}"),
                    Tensor::new(vec![p.h, p.h], grab(p.layer_weights(g, l))),
                );
                tensors.insert(
                    format!("{name}.d{l}"),
                    Tensor::new(vec![p.h], grab(p.layer_bias(g, l))),
                );
            }
        }
        LstmTensors { h: p.h, d: p.d, gate_depth: p.gate_depth, tensors }
    }
}

impl TryFrom<LstmTensors> for LstmParams {
    type Error = NnError;

    fn try_from(mut t: LstmTensors) -> Result<Self, NnError> {
        if t.h == 0 || t.d == 0 || t.gate_depth == 0 {
            return Err(NnError::BadTensor("zero dimension".into()));
        }
        let mut p = LstmParams::zeros(t.h, t.d, t.gate_depth);
        for (g, name) in GATE_NAMES.iter().enumerate() {
            let w = Tensor::take(&mut t.tensors, &format!("{name}.w"), &[p.h, p.d])?;
            p.slice_mut(p.weights(g)).copy_from_slice(&w);
            let u = Tensor::take(&mut t.tensors, &format!("{name}.u"), &[p.h, p.h])?;
            p.slice_mut(p.recurrent(g)).copy_from_slice(&u);
            let b = Tensor::take(&mut t.tensors, &format!("{name}.b"), &[p.h])?;
            p.slice_mut(p.bias(g)).copy_from_slice(&b);
            for l in 1..p.gate_depth {
                let m = Tensor::take(&mut t.tensors, &format!("{name}.m{l}"), &[p.h, p.h])?;
                p.slice_mut(p.layer_weights(g, l)).copy_from_slice(&m);
                let d = Tensor::take(&mut t.tensors, &format!("{name}.d{l}"), &[p.h])?;
                p.slice_mut(p.layer_bias(g, l)).copy_from_slice(&d);
            }
        }
        if let Some(extra) = t.tensors.keys().next() {
            return Err(NnError::BadTensor(format!("unexpected tensor {extra}")));
        }
        Ok(p)
    }
}

/// Serialized form of [`DenseParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseTensors {
    pub k: usize,
    pub h: usize,
    pub tensors: BTreeMap<String, Tensor>,
}

impl From<DenseParams> for DenseTensors {
    fn from(p: DenseParams) -> Self {
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "w".to_string(),
            Tensor::new(vec![p.k, p.h], p.weight_slice().to_vec()),
        );
        tensors.insert("b".to_string(), Tensor::new(vec![p.k], p.bias_slice().to_vec()));
        DenseTensors { k: p.k, h: p.h, tensors }
    }
}

impl TryFrom<DenseTensors> for DenseParams {
    type Error = NnError;

    fn try_from(mut t: DenseTensors) -> Result<Self, NnError> {
        if t.k == 0 || t.h == 0 {
            return Err(NnError::BadTensor("zero dimension".into()));
        }
        let mut p = DenseParams::zeros(t.k, t.h);
        let w = Tensor::take(&mut t.tensors, "w", &[p.k, p.h])?;
        let b = Tensor::take(&mut t.tensors, "b", &[p.k])?;
        let split = p.k * p.h;
        p.w[..split].copy_from_slice(&w);
        p.w[split..].copy_from_slice(&b);
        Ok(p)
    }
}
