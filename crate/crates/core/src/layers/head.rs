//! Output layer: affine map followed by softmax/cross-entropy for frame
//! classification or identity/squared error for regression.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ParamInfo, ParamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Softmax,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSpec {
    pub input: usize,
    pub output: usize,
    pub kind: HeadKind,
}

/// Supervision attached to one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    None,
    Class(usize),
    Value(Vec<f64>),
}

impl Target {
    pub fn is_some(&self) -> bool {
        !matches!(self, Target::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    kind: HeadKind,
    pub w: Tensor,
    pub b: Tensor,
}

impl Head {
    pub fn new(spec: HeadSpec) -> Self {
        Head {
            kind: spec.kind,
            w: Tensor::zeros(spec.output, spec.input),
            b: Tensor::zeros(spec.output, 1),
        }
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn spec(&self) -> HeadSpec {
        HeadSpec {
            input: self.w.cols(),
            output: self.w.rows(),
            kind: self.kind,
        }
    }

    pub fn param_infos(&self, prefix: &str) -> Vec<ParamInfo> {
        [("w", ParamKind::Weight), ("b", ParamKind::Bias)]
            .into_iter()
            .map(|(n, kind)| ParamInfo {
                name: format!("{prefix}{n}"),
                kind,
                trainable: true,
                recurrent: false,
            })
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn forward(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.b.as_slice().to_vec();
        self.w.matvec_acc(h, &mut z);
        z
    }

    /// Loss of one frame and its gradient w.r.t. the head output.
    pub fn loss(&self, z: &[f64], target: &Target) -> Result<Option<(f64, Vec<f64>)>> {
        match (self.kind, target) {
            (_, Target::None) => Ok(None),
            (HeadKind::Softmax, Target::Class(k)) => {
                if *k >= z.len() {
                    return Err(Error::Usage(format!("class {k} out of range for {} outputs", z.len())));
                }
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let log_norm = max + sum.ln();
                let mut d: Vec<f64> = z.iter().map(|v| (v - log_norm).exp()).collect();
                d[*k] -= 1.0;
                Ok(Some((log_norm - z[*k], d)))
            }
            (HeadKind::Linear, Target::Value(t)) => {
                if t.len() != z.len() {
                    return Err(Error::dim("regression target", (z.len(), 1), (t.len(), 1)));
                }
                let loss = z.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = z.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect();
                Ok(Some((loss, d)))
            }
            (kind, t) => Err(Error::Usage(format!("{kind:?} head cannot score target {t:?}"))),
        }
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `h`.
    pub fn backward(&self, h: &[f64], d_z: &[f64], grads: &mut Head) -> Vec<f64> {
        grads.w.outer_acc(d_z, h);
        grads.b.as_mut_slice().iter_mut().zip(d_z).for_each(|(g, d)| *g += d);
        let mut d_h = vec![0.0; h.len()];
        self.w.matvec_t_acc(d_z, &mut d_h);
        d_h
    }
}

/// Index of the largest output; ties go to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = k;
        }
    }
    best
}
