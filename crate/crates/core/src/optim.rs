//! Named parameters and the Adam optimizer.

use crate::error::{Error, Result};
use crate::layout::{LayerSpec, ParamLayout};
use crate::rng::Stream;
use crate::tape::{Gradients, NodeId, Tape};
use crate::tensor::Tensor;

/// One trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Param {
        let grad = Tensor::zeros(value.shape().to_vec());
        Param { name: name.into(), value, grad }
    }
}

/// An ordered collection of params; order defines the flattened layout.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn push(&mut self, param: Param) -> usize {
        self.params.push(param);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Glorot-uniform matrix with zero bias column, stored augmented.
    pub fn push_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Stream) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let t = Tensor::from_fn(vec![rows, cols + 1], |i| {
            if (i + 1) % (cols + 1) == 0 {
                0.0
            } else {
                rng.uniform_in(-bound, bound)
            }
        });
        self.push(Param::new(name, t))
    }

    /// Bind every param onto a tape as leaves, in order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Pull gradients for previously bound leaves into the params.
    pub fn absorb_grads(&mut self, ids: &[NodeId], grads: &mut Gradients) {
        for (p, &id) in self.params.iter_mut().zip(ids) {
            if let Some(g) = grads.take(id) {
                for (acc, gv) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += gv;
                }
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Concatenate all values row-major in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.params {
            out.extend_from_slice(p.value.data());
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.params.iter().map(|p| p.value.numel()).sum();
        if flat.len() != total {
            return Err(Error::Format(format!(
                "flat vector has {} values, layout expects {}",
                flat.len(),
                total
            )));
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Layout view for checkpoint metadata. Rank-1 params are 1-row entries;
    /// `cols` excludes the bias slot only for augmented matrices.
    pub fn layout(&self) -> ParamLayout {
        let layers = self
            .params
            .iter()
            .map(|p| {
                let (rows, width) = if p.value.shape().len() == 2 {
                    (p.value.shape()[0], p.value.shape()[1])
                } else {
                    (1, p.value.numel())
                };
                LayerSpec { name: p.name.clone(), rows, cols: width - 1, has_bias: true }
            })
            .collect();
        ParamLayout::new(layers)
    }
}

/// Adam with bias correction. Moment buffers start at zero.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Adam> {
        Adam::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Adam> {
        if lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Adam { lr, beta1, beta2, eps, step_count: 0, m: Vec::new(), v: Vec::new() })
    }

    /// Apply one update from the params' accumulated gradients, then zero them.
    pub fn step(&mut self, params: &mut ParamSet) {
        if self.m.is_empty() {
            for p in &params.params {
                self.m.push(Tensor::zeros(p.value.shape().to_vec()));
                self.v.push(Tensor::zeros(p.value.shape().to_vec()));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((value, &g), (mi, vi)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *value -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grads();
    }
}
