//! LSTM with diagonal peepholes, its projected form, and the semi-tied
//! variant in which all four units share one input matrix, one recurrent
//! matrix, one bias and one peephole vector.
//!
//! Units are indexed `i, f, o, c` (input gate, forget gate, output gate,
//! candidate). For every unit the activation input is
//!
//! ```text
//! a_g = W_g x_t + U_g h_{t-1} + b_g (+ V_g o c)
//! ```
//!
//! with the peephole term using `c_{t-1}` for `i, f` and `c_t` for `o`, and
//! none for the candidate. The semi-tied layer computes the shared affine
//! part `W x_t + U h_{t-1}` once and tells units apart only through their
//! own parameterised activation.

use crate::activations::{backward_slice, forward_slice, sigmoid, ActKind, ActParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Downstream, ParamInfo, ParamKind};

pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const UNIT_C: usize = 3;
const UNIT_NAMES: [&str; 4] = ["i", "f", "o", "c"];

/// Variant switches for the semi-tied LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StuFlags {
    /// Separate peephole vectors for `i, f, o`.
    pub untie_v: bool,
    /// Separate bias vectors for all four units.
    pub untie_b: bool,
    /// Keep every `eta` at its initial value of one.
    pub frozen_eta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LstmVariant {
    Standard,
    Projected { proj: usize },
    SemiTied(StuFlags),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    variant: LstmVariant,
    input: usize,
    hidden: usize,
    /// Input matrices, `H x X`: four, or one when tied.
    pub w: Vec<Tensor>,
    /// Recurrent matrices, `H x R` where `R` is `P` for the projected form.
    pub u: Vec<Tensor>,
    pub b: Vec<Tensor>,
    /// Peephole diagonals: three (`i, f, o`), or one when tied.
    pub v: Vec<Tensor>,
    /// `P x H` projection of the projected form.
    pub proj: Option<Tensor>,
    /// Activation scales for `i, f, o, c`; semi-tied only.
    pub acts: Vec<ActParams>,
}

/// Memory cell and (possibly projected) hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl CellState {
    pub fn zeros(p: &LstmParams) -> Self {
        CellState {
            c: vec![0.0; p.hidden],
            h: vec![0.0; p.output_dim()],
        }
    }
}

/// Everything one step produced that the backward pass reads.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activation inputs of `i, f, o, c`, peephole terms included.
    pub pre: [Vec<f64>; 4],
    /// Activation outputs `i_t, f_t, o_t, c~_t`.
    pub units: [Vec<f64>; 4],
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    /// `o_t * tanh(c_t)` before any projection.
    pub h_full: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmParams {
    /// Zero weights, biases and peepholes; unit activation scales.
    pub fn new(variant: LstmVariant, input: usize, hidden: usize) -> Self {
        let recur = match variant {
            LstmVariant::Projected { proj } => proj,
            _ => hidden,
        };
        let vec = |n: usize| (0..n).map(|_| Tensor::zeros(hidden, 1)).collect::<Vec<_>>();
        let (n_w, n_b, n_v) = match variant {
            LstmVariant::SemiTied(f) => (1, if f.untie_b { 4 } else { 1 }, if f.untie_v { 3 } else { 1 }),
            _ => (4, 4, 3),
        };
        let acts = match variant {
            LstmVariant::SemiTied(f) => (0..4)
                .map(|g| {
                    let mut a = ActParams::identity(unit_kind(g), hidden);
                    a.frozen_eta = f.frozen_eta;
                    a
                })
                .collect(),
            _ => Vec::new(),
        };
        LstmParams {
            variant,
            input,
            hidden,
            w: (0..n_w).map(|_| Tensor::zeros(hidden, input)).collect(),
            u: (0..n_w).map(|_| Tensor::zeros(hidden, recur)).collect(),
            b: vec(n_b),
            v: vec(n_v),
            proj: match variant {
                LstmVariant::Projected { proj } => Some(Tensor::zeros(proj, hidden)),
                _ => None,
            },
            acts,
        }
    }

    pub fn variant(&self) -> LstmVariant {
        self.variant
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Width of the emitted (and fed back) hidden state.
    pub fn output_dim(&self) -> usize {
        self.proj.as_ref().map_or(self.hidden, Tensor::rows)
    }

    pub fn is_tied(&self) -> bool {
        self.w.len() == 1
    }

    /// The forget gate's own bias; `None` when the bias is shared.
    pub fn forget_bias_mut(&mut self) -> Option<&mut Tensor> {
        if self.b.len() == 4 {
            Some(&mut self.b[GATE_F])
        } else {
            None
        }
    }

    fn b_index(&self, g: usize) -> usize {
        if self.b.len() == 1 {
            0
        } else {
            g
        }
    }

    fn v_index(&self, g: usize) -> usize {
        if self.v.len() == 1 {
            0
        } else {
            g
        }
    }

    pub fn param_infos(&self, prefix: &str) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        let mut push = |name: String, kind: ParamKind, trainable: bool| {
            out.push(ParamInfo {
                name: format!("{prefix}{name}"),
                kind,
                trainable,
                recurrent: true,
            })
        };
        let suffix = |n: usize, g: usize| if n == 1 { String::new() } else { format!("_{}", UNIT_NAMES[g]) };
        for g in 0..self.w.len() {
            push(format!("w{}", suffix(self.w.len(), g)), ParamKind::Weight, true);
        }
        for g in 0..self.u.len() {
            push(format!("u{}", suffix(self.u.len(), g)), ParamKind::Weight, true);
        }
        for g in 0..self.b.len() {
            push(format!("b{}", suffix(self.b.len(), g)), ParamKind::Bias, true);
        }
        for g in 0..self.v.len() {
            push(format!("v{}", suffix(self.v.len(), g)), ParamKind::Peephole, true);
        }
        if self.proj.is_some() {
            push("proj".into(), ParamKind::Projection, true);
        }
        for (g, a) in self.acts.iter().enumerate() {
            push(format!("eta_{}", UNIT_NAMES[g]), ParamKind::Eta, !a.frozen_eta);
            if a.gamma.is_some() {
                push(format!("gamma_{}", UNIT_NAMES[g]), ParamKind::Gamma, true);
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        out.extend(&self.w);
        out.extend(&self.u);
        out.extend(&self.b);
        out.extend(&self.v);
        out.extend(self.proj.as_ref());
        for a in &self.acts {
            out.push(&a.eta);
            out.extend(a.gamma.as_ref());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(&mut self.w);
        out.extend(&mut self.u);
        out.extend(&mut self.b);
        out.extend(&mut self.v);
        out.extend(self.proj.as_mut());
        for a in &mut self.acts {
            out.push(&mut a.eta);
            out.extend(a.gamma.as_mut());
        }
        out
    }

    fn unit_forward(&self, g: usize, a: &[f64], out: &mut [f64]) {
        match self.acts.get(g) {
            Some(p) => forward_slice(
                unit_kind(g),
                a,
                p.eta.as_slice(),
                p.gamma.as_ref().map(Tensor::as_slice),
                out,
            ),
            None if g == UNIT_C => out.iter_mut().zip(a).for_each(|(o, &x)| *o = x.tanh()),
            None => out.iter_mut().zip(a).for_each(|(o, &x)| *o = sigmoid(x)),
        }
    }

    fn unit_backward(&self, g: usize, a: &[f64], upstream: &[f64], d_a: &mut [f64], grads: &mut LstmParams) {
        match self.acts.get(g) {
            Some(p) => {
                let ga = &mut grads.acts[g];
                let d_eta = (!p.frozen_eta).then(|| ga.eta.as_mut_slice());
                backward_slice(
                    unit_kind(g),
                    a,
                    p.eta.as_slice(),
                    p.gamma.as_ref().map(Tensor::as_slice),
                    upstream,
                    d_a,
                    d_eta,
                    ga.gamma.as_mut().map(Tensor::as_mut_slice),
                );
            }
            None if g == UNIT_C => {
                for j in 0..a.len() {
                    let t = a[j].tanh();
                    d_a[j] = upstream[j] * (1.0 - t * t);
                }
            }
            None => {
                for j in 0..a.len() {
                    let s = sigmoid(a[j]);
                    d_a[j] = upstream[j] * s * (1.0 - s);
                }
            }
        }
    }

    fn check_step(&self, x: &[f64], state: &CellState) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::dim("lstm step input", (self.input, 1), (x.len(), 1)));
        }
        if state.h.len() != self.output_dim() {
            return Err(Error::dim("lstm step state h", (self.output_dim(), 1), (state.h.len(), 1)));
        }
        if state.c.len() != self.hidden {
            return Err(Error::dim("lstm step state c", (self.hidden, 1), (state.c.len(), 1)));
        }
        Ok(())
    }

    /// One time step of whichever variant this is.
    pub fn step(&self, x: &[f64], state: &CellState) -> Result<(CellState, LstmCache)> {
        self.check_step(x, state)?;
        let n = self.hidden;
        let h_prev = &state.h;
        let c_prev = &state.c;

        let mut pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
        if self.is_tied() {
            let mut e = vec![0.0; n];
            self.w[0].matvec_acc(x, &mut e);
            self.u[0].matvec_acc(h_prev, &mut e);
            for (g, a) in pre.iter_mut().enumerate() {
                let b = self.b[self.b_index(g)].as_slice();
                for j in 0..n {
                    a[j] = e[j] + b[j];
                }
            }
        } else {
            for (g, a) in pre.iter_mut().enumerate() {
                a.copy_from_slice(self.b[g].as_slice());
                self.w[g].matvec_acc(x, a);
                self.u[g].matvec_acc(h_prev, a);
            }
        }

        for g in [GATE_I, GATE_F] {
            let v = self.v[self.v_index(g)].as_slice();
            for j in 0..n {
                pre[g][j] += v[j] * c_prev[j];
            }
        }

        let mut units: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
        for g in [GATE_I, GATE_F, UNIT_C] {
            self.unit_forward(g, &pre[g], &mut units[g]);
        }

        let c: Vec<f64> = (0..n)
            .map(|j| units[GATE_F][j] * c_prev[j] + units[GATE_I][j] * units[UNIT_C][j])
            .collect();

        let v_o = self.v[self.v_index(GATE_O)].as_slice();
        for j in 0..n {
            pre[GATE_O][j] += v_o[j] * c[j];
        }
        self.unit_forward(GATE_O, &pre[GATE_O], &mut units[GATE_O]);

        let tanh_c: Vec<f64> = c.iter().map(|x| x.tanh()).collect();
        let h_full: Vec<f64> = (0..n).map(|j| units[GATE_O][j] * tanh_c[j]).collect();
        let h = match &self.proj {
            Some(p) => {
                let mut h = vec![0.0; p.rows()];
                p.matvec_acc(&h_full, &mut h);
                h
            }
            None => h_full.clone(),
        };

        let next = CellState {
            c: c.clone(),
            h: h.clone(),
        };
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            pre,
            units,
            c,
            tanh_c,
            h_full,
            h,
        };
        Ok((next, cache))
    }

    /// Reverse mode through one step.
    ///
    /// `d_h` is the gradient w.r.t. the emitted state, `d_c_next` the cell
    /// gradient arriving from step `t+1`. Tied parameters receive the sum of
    /// the contributions of all four units.
    pub fn backward(
        &self,
        cache: &LstmCache,
        d_h: &[f64],
        d_c_next: &[f64],
        grads: &mut LstmParams,
    ) -> Result<Downstream> {
        let n = self.hidden;
        if cache.x.len() != self.input
            || cache.c.len() != n
            || cache.h.len() != self.output_dim()
            || cache.h_prev.len() != self.output_dim()
        {
            return Err(Error::Consistency(format!(
                "lstm cache (x={}, c={}, h={}) does not match layer {}->{} (state {})",
                cache.x.len(),
                cache.c.len(),
                cache.h.len(),
                self.input,
                n,
                self.output_dim()
            )));
        }
        if grads.variant != self.variant || grads.input != self.input || grads.hidden != n {
            return Err(Error::Consistency("gradient buffers shaped for another layer".into()));
        }
        if d_h.len() != self.output_dim() || d_c_next.len() != n {
            return Err(Error::dim("lstm backward upstream", (self.output_dim(), n), (d_h.len(), d_c_next.len())));
        }

        let d_h_full: Vec<f64> = match (&self.proj, grads.proj.as_mut()) {
            (Some(p), Some(gp)) => {
                gp.outer_acc(d_h, &cache.h_full);
                let mut d = vec![0.0; n];
                p.matvec_t_acc(d_h, &mut d);
                d
            }
            _ => d_h.to_vec(),
        };

        let [i, f, o, ct] = &cache.units;
        let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);

        let d_o: Vec<f64> = (0..n).map(|j| d_h_full[j] * cache.tanh_c[j]).collect();
        self.unit_backward(GATE_O, &cache.pre[GATE_O], &d_o, &mut d_pre[GATE_O], grads);

        let v_o = self.v[self.v_index(GATE_O)].as_slice();
        let mut d_c: Vec<f64> = (0..n)
            .map(|j| {
                let t = cache.tanh_c[j];
                d_c_next[j] + d_h_full[j] * o[j] * (1.0 - t * t) + d_pre[GATE_O][j] * v_o[j]
            })
            .collect();
        {
            let gv = grads.v[self.v_index(GATE_O)].as_mut_slice();
            for j in 0..n {
                gv[j] += d_pre[GATE_O][j] * cache.c[j];
            }
        }

        let d_i: Vec<f64> = (0..n).map(|j| d_c[j] * ct[j]).collect();
        let d_f: Vec<f64> = (0..n).map(|j| d_c[j] * cache.c_prev[j]).collect();
        let d_ct: Vec<f64> = (0..n).map(|j| d_c[j] * i[j]).collect();
        for j in 0..n {
            d_c[j] *= f[j];
        }
        let mut d_c_prev = d_c;

        self.unit_backward(GATE_I, &cache.pre[GATE_I], &d_i, &mut d_pre[GATE_I], grads);
        self.unit_backward(GATE_F, &cache.pre[GATE_F], &d_f, &mut d_pre[GATE_F], grads);
        self.unit_backward(UNIT_C, &cache.pre[UNIT_C], &d_ct, &mut d_pre[UNIT_C], grads);

        for g in [GATE_I, GATE_F] {
            let vi = self.v_index(g);
            let v = self.v[vi].as_slice();
            let gv = grads.v[vi].as_mut_slice();
            for j in 0..n {
                d_c_prev[j] += d_pre[g][j] * v[j];
                gv[j] += d_pre[g][j] * cache.c_prev[j];
            }
        }

        for g in 0..4 {
            let gb = grads.b[self.b_index(g)].as_mut_slice();
            for j in 0..n {
                gb[j] += d_pre[g][j];
            }
        }

        let mut d_x = vec![0.0; self.input];
        let mut d_h_prev = vec![0.0; self.output_dim()];
        if self.is_tied() {
            let d_e: Vec<f64> = (0..n)
                .map(|j| d_pre[GATE_I][j] + d_pre[GATE_F][j] + d_pre[GATE_O][j] + d_pre[UNIT_C][j])
                .collect();
            grads.w[0].outer_acc(&d_e, &cache.x);
            grads.u[0].outer_acc(&d_e, &cache.h_prev);
            self.w[0].matvec_t_acc(&d_e, &mut d_x);
            self.u[0].matvec_t_acc(&d_e, &mut d_h_prev);
        } else {
            for (g, d) in d_pre.iter().enumerate() {
                grads.w[g].outer_acc(d, &cache.x);
                grads.u[g].outer_acc(d, &cache.h_prev);
                self.w[g].matvec_t_acc(d, &mut d_x);
                self.u[g].matvec_t_acc(d, &mut d_h_prev);
            }
        }

        Ok(Downstream {
            d_x,
            d_h_prev: Some(d_h_prev),
            d_c_prev: Some(d_c_prev),
        })
    }
}

fn unit_kind(g: usize) -> ActKind {
    if g == UNIT_C {
        ActKind::PTanh
    } else {
        ActKind::PSigmoid
    }
}

fn step_variant(
    p: &LstmParams,
    want: &'static str,
    ok: bool,
    x: &Tensor,
    s: &CellState,
) -> Result<(Tensor, CellState, LstmCache)> {
    if !ok {
        return Err(Error::Usage(format!("{want} called on a {:?} layer", p.variant)));
    }
    let (next, cache) = p.step(x.as_slice(), s)?;
    Ok((Tensor::vector(next.h.clone()), next, cache))
}

/// Standard peephole LSTM step.
pub fn lstm_step(p: &LstmParams, x: &Tensor, s: &CellState) -> Result<(Tensor, CellState, LstmCache)> {
    step_variant(p, "lstm_step", p.variant == LstmVariant::Standard, x, s)
}

/// Projected LSTM step; the emitted and fed-back state has length `P`.
pub fn lstmp_step(p: &LstmParams, x: &Tensor, s: &CellState) -> Result<(Tensor, CellState, LstmCache)> {
    let ok = matches!(p.variant, LstmVariant::Projected { .. });
    step_variant(p, "lstmp_step", ok, x, s)
}

/// Semi-tied LSTM step.
pub fn stu_lstm_step(p: &LstmParams, x: &Tensor, s: &CellState) -> Result<(Tensor, CellState, LstmCache)> {
    let ok = matches!(p.variant, LstmVariant::SemiTied(_));
    step_variant(p, "stu_lstm_step", ok, x, s)
}
