//! Feed-forward layers: plain dense, highway, and semi-tied highway.
//!
//! A highway layer mixes a candidate `y~ = f(W_y x + b_y)` with its own
//! input through a transform gate `m` and a carry gate `r`:
//! `y = m o y~ + r o x`, or `y = m o y~ + (1 - m) o x` with a coupled carry.
//! The semi-tied form computes `e = W x + b` once and derives `m`, `r` and
//! `y~` from it through per-unit parameterised activations.

use crate::activations::{backward_slice, forward_slice, sigmoid, ActKind, ActParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Downstream, ParamInfo, ParamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighwayVariant {
    PlainDense,
    Highway,
    SemiTied,
}

/// Nonlinearity of the candidate (or of a plain dense layer).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CarryMode {
    /// Separate carry gate `r`.
    #[default]
    Independent,
    /// Carry is `1 - m`; no carry parameters.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Transform,
    Carry,
    Candidate,
}

impl Unit {
    fn tag(self) -> &'static str {
        match self {
            Unit::Transform => "m",
            Unit::Carry => "r",
            Unit::Candidate => "y",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayParams {
    variant: HighwayVariant,
    candidate: CandidateKind,
    carry: CarryMode,
    input: usize,
    output: usize,
    /// One matrix per unit for `Highway`, a single shared one otherwise.
    pub w: Vec<Tensor>,
    pub b: Vec<Tensor>,
    /// Per-unit activation scales; semi-tied only.
    pub acts: Vec<ActParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayCache {
    pub x: Vec<f64>,
    /// Activation inputs per unit (all equal to `e` when tied).
    pub pre: Vec<Vec<f64>>,
    /// Activation outputs per unit, in [`HighwayParams::units`] order.
    pub values: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl HighwayParams {
    fn build(variant: HighwayVariant, input: usize, output: usize, candidate: CandidateKind, carry: CarryMode) -> Self {
        let mut p = HighwayParams {
            variant,
            candidate,
            carry,
            input,
            output,
            w: Vec::new(),
            b: Vec::new(),
            acts: Vec::new(),
        };
        let units = p.units();
        let n_mats = if variant == HighwayVariant::Highway { units.len() } else { 1 };
        p.w = (0..n_mats).map(|_| Tensor::zeros(output, input)).collect();
        p.b = (0..n_mats).map(|_| Tensor::zeros(output, 1)).collect();
        if variant == HighwayVariant::SemiTied {
            p.acts = units.iter().map(|&u| ActParams::identity(p.unit_kind(u), output)).collect();
        }
        p
    }

    pub fn dense(input: usize, output: usize, activation: CandidateKind) -> Self {
        Self::build(HighwayVariant::PlainDense, input, output, activation, CarryMode::Independent)
    }

    pub fn highway(dim: usize, candidate: CandidateKind, carry: CarryMode) -> Self {
        Self::build(HighwayVariant::Highway, dim, dim, candidate, carry)
    }

    pub fn semi_tied(dim: usize, candidate: CandidateKind, carry: CarryMode) -> Self {
        Self::build(HighwayVariant::SemiTied, dim, dim, candidate, carry)
    }

    pub fn variant(&self) -> HighwayVariant {
        self.variant
    }

    pub fn candidate(&self) -> CandidateKind {
        self.candidate
    }

    pub fn carry(&self) -> CarryMode {
        self.carry
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    fn units(&self) -> Vec<Unit> {
        match (self.variant, self.carry) {
            (HighwayVariant::PlainDense, _) => vec![Unit::Candidate],
            (_, CarryMode::Independent) => vec![Unit::Transform, Unit::Carry, Unit::Candidate],
            (_, CarryMode::Coupled) => vec![Unit::Transform, Unit::Candidate],
        }
    }

    fn unit_kind(&self, u: Unit) -> ActKind {
        match (u, self.candidate) {
            (Unit::Candidate, CandidateKind::Relu) => ActKind::PRelu,
            _ => ActKind::PSigmoid,
        }
    }

    fn is_tied(&self) -> bool {
        self.variant != HighwayVariant::Highway
    }

    pub fn param_infos(&self, prefix: &str) -> Vec<ParamInfo> {
        let units = self.units();
        let name = |base: &str, k: usize| {
            if self.is_tied() {
                format!("{prefix}{base}")
            } else {
                format!("{prefix}{base}_{}", units[k].tag())
            }
        };
        let info = |name: String, kind: ParamKind, trainable: bool| ParamInfo {
            name,
            kind,
            trainable,
            recurrent: false,
        };
        let mut out = Vec::new();
        for k in 0..self.w.len() {
            out.push(info(name("w", k), ParamKind::Weight, true));
        }
        for k in 0..self.b.len() {
            out.push(info(name("b", k), ParamKind::Bias, true));
        }
        for (a, u) in self.acts.iter().zip(&units) {
            out.push(info(format!("{prefix}eta_{}", u.tag()), ParamKind::Eta, !a.frozen_eta));
            if a.gamma.is_some() {
                out.push(info(format!("{prefix}gamma_{}", u.tag()), ParamKind::Gamma, true));
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        out.extend(&self.w);
        out.extend(&self.b);
        for a in &self.acts {
            out.push(&a.eta);
            out.extend(a.gamma.as_ref());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(&mut self.w);
        out.extend(&mut self.b);
        for a in &mut self.acts {
            out.push(&mut a.eta);
            out.extend(a.gamma.as_mut());
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, HighwayCache)> {
        if x.len() != self.input {
            return Err(Error::dim("highway input", (self.input, 1), (x.len(), 1)));
        }
        if self.variant != HighwayVariant::PlainDense && self.input != self.output {
            return Err(Error::dim("highway carry path", (self.input, 1), (self.output, 1)));
        }
        let n = self.output;
        let units = self.units();

        let pre: Vec<Vec<f64>> = if self.is_tied() {
            let mut e = self.b[0].as_slice().to_vec();
            self.w[0].matvec_acc(x, &mut e);
            vec![e; units.len()]
        } else {
            (0..units.len())
                .map(|k| {
                    let mut a = self.b[k].as_slice().to_vec();
                    self.w[k].matvec_acc(x, &mut a);
                    a
                })
                .collect()
        };

        let mut values = vec![vec![0.0; n]; units.len()];
        for (k, &u) in units.iter().enumerate() {
            let kind = self.unit_kind(u);
            match self.acts.get(k) {
                Some(p) => forward_slice(
                    kind,
                    &pre[k],
                    p.eta.as_slice(),
                    p.gamma.as_ref().map(Tensor::as_slice),
                    &mut values[k],
                ),
                None => {
                    for j in 0..n {
                        values[k][j] = match kind {
                            ActKind::PRelu => pre[k][j].max(0.0),
                            _ => sigmoid(pre[k][j]),
                        };
                    }
                }
            }
        }

        let y: Vec<f64> = match (self.variant, self.carry) {
            (HighwayVariant::PlainDense, _) => values[0].clone(),
            (_, CarryMode::Independent) => {
                let (m, r, yt) = (&values[0], &values[1], &values[2]);
                (0..n).map(|j| m[j] * yt[j] + r[j] * x[j]).collect()
            }
            (_, CarryMode::Coupled) => {
                let (m, yt) = (&values[0], &values[1]);
                (0..n).map(|j| m[j] * yt[j] + (1.0 - m[j]) * x[j]).collect()
            }
        };

        let cache = HighwayCache {
            x: x.to_vec(),
            pre,
            values,
            y: y.clone(),
        };
        Ok((y, cache))
    }

    pub fn backward(&self, cache: &HighwayCache, d_y: &[f64], grads: &mut HighwayParams) -> Result<Downstream> {
        let units = self.units();
        if cache.x.len() != self.input || cache.y.len() != self.output || cache.values.len() != units.len() {
            return Err(Error::Consistency(format!(
                "highway cache ({} units, {}->{}) does not match layer {:?} {}->{}",
                cache.values.len(),
                cache.x.len(),
                cache.y.len(),
                self.variant,
                self.input,
                self.output
            )));
        }
        if grads.variant != self.variant || grads.carry != self.carry || grads.w.len() != self.w.len() {
            return Err(Error::Consistency("gradient buffers shaped for another layer".into()));
        }
        if d_y.len() != self.output {
            return Err(Error::dim("highway backward upstream", (self.output, 1), (d_y.len(), 1)));
        }
        let n = self.output;
        let x = &cache.x;
        let v = &cache.values;

        let mut d_x = vec![0.0; self.input];
        // Gradient w.r.t. each unit's output.
        let d_values: Vec<Vec<f64>> = match (self.variant, self.carry) {
            (HighwayVariant::PlainDense, _) => vec![d_y.to_vec()],
            (_, CarryMode::Independent) => {
                let (m, r, yt) = (&v[0], &v[1], &v[2]);
                for j in 0..n {
                    d_x[j] += d_y[j] * r[j];
                }
                vec![
                    (0..n).map(|j| d_y[j] * yt[j]).collect(),
                    (0..n).map(|j| d_y[j] * x[j]).collect(),
                    (0..n).map(|j| d_y[j] * m[j]).collect(),
                ]
            }
            (_, CarryMode::Coupled) => {
                let (m, yt) = (&v[0], &v[1]);
                for j in 0..n {
                    d_x[j] += d_y[j] * (1.0 - m[j]);
                }
                vec![
                    (0..n).map(|j| d_y[j] * (yt[j] - x[j])).collect(),
                    (0..n).map(|j| d_y[j] * m[j]).collect(),
                ]
            }
        };

        let mut d_pre = vec![vec![0.0; n]; units.len()];
        for (k, &u) in units.iter().enumerate() {
            let kind = self.unit_kind(u);
            match self.acts.get(k) {
                Some(p) => {
                    let ga = &mut grads.acts[k];
                    let d_eta = (!p.frozen_eta).then(|| ga.eta.as_mut_slice());
                    backward_slice(
                        kind,
                        &cache.pre[k],
                        p.eta.as_slice(),
                        p.gamma.as_ref().map(Tensor::as_slice),
                        &d_values[k],
                        &mut d_pre[k],
                        d_eta,
                        ga.gamma.as_mut().map(Tensor::as_mut_slice),
                    );
                }
                None => {
                    for j in 0..n {
                        d_pre[k][j] = match kind {
                            ActKind::PRelu => {
                                if cache.pre[k][j] >= 0.0 {
                                    d_values[k][j]
                                } else {
                                    0.0
                                }
                            }
                            _ => d_values[k][j] * v[k][j] * (1.0 - v[k][j]),
                        };
                    }
                }
            }
        }

        if self.is_tied() {
            let d_e: Vec<f64> = (0..n).map(|j| d_pre.iter().map(|d| d[j]).sum()).collect();
            grads.w[0].outer_acc(&d_e, x);
            grads.b[0]
                .as_mut_slice()
                .iter_mut()
                .zip(&d_e)
                .for_each(|(g, d)| *g += d);
            self.w[0].matvec_t_acc(&d_e, &mut d_x);
        } else {
            for (k, d) in d_pre.iter().enumerate() {
                grads.w[k].outer_acc(d, x);
                grads.b[k]
                    .as_mut_slice()
                    .iter_mut()
                    .zip(d)
                    .for_each(|(g, d)| *g += d);
                self.w[k].matvec_t_acc(d, &mut d_x);
            }
        }

        Ok(Downstream {
            d_x,
            d_h_prev: None,
            d_c_prev: None,
        })
    }
}

/// Standard highway (or plain dense) layer forward.
pub fn highway_forward(p: &HighwayParams, x: &Tensor) -> Result<(Tensor, HighwayCache)> {
    if p.variant == HighwayVariant::SemiTied {
        return Err(Error::Usage("highway_forward called on a semi-tied layer".into()));
    }
    let (y, cache) = p.forward(x.as_slice())?;
    Ok((Tensor::vector(y), cache))
}

/// Semi-tied highway layer forward.
pub fn stu_highway_forward(p: &HighwayParams, x: &Tensor) -> Result<(Tensor, HighwayCache)> {
    if p.variant != HighwayVariant::SemiTied {
        return Err(Error::Usage("stu_highway_forward called on a non semi-tied layer".into()));
    }
    let (y, cache) = p.forward(x.as_slice())?;
    Ok((Tensor::vector(y), cache))
}
