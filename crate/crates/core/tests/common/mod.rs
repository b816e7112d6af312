//! Shared test oracles, written independently of the library's kernels.

#![allow(dead_code)]

pub mod equiv;

use std::collections::BTreeMap;

use stu_core::layers::{HeadKind, LstmParams, ParamKind, Target};
use stu_core::model::{Model, Sequence};
use stu_core::rng::Rng;
use stu_core::tensor::Tensor;

/// Scalar reverse-mode tape. Every node has at most two parents with their
/// local partial derivatives.
#[derive(Default)]
pub struct Tape {
    vals: Vec<f64>,
    parents: Vec<[(usize, f64); 2]>,
}

const NONE: usize = usize::MAX;

impl Tape {
    fn push(&mut self, v: f64, p: [(usize, f64); 2]) -> usize {
        self.vals.push(v);
        self.parents.push(p);
        self.vals.len() - 1
    }

    pub fn var(&mut self, v: f64) -> usize {
        self.push(v, [(NONE, 0.0), (NONE, 0.0)])
    }

    pub fn val(&self, i: usize) -> f64 {
        self.vals[i]
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        self.push(self.vals[a] + self.vals[b], [(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: usize, b: usize) -> usize {
        self.push(self.vals[a] - self.vals[b], [(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let (x, y) = (self.vals[a], self.vals[b]);
        self.push(x * y, [(a, y), (b, x)])
    }

    pub fn scale(&mut self, a: usize, k: f64) -> usize {
        self.push(self.vals[a] * k, [(a, k), (NONE, 0.0)])
    }

    pub fn sigmoid(&mut self, a: usize) -> usize {
        let s = 1.0 / (1.0 + (-self.vals[a]).exp());
        self.push(s, [(a, s * (1.0 - s)), (NONE, 0.0)])
    }

    pub fn tanh(&mut self, a: usize) -> usize {
        let t = self.vals[a].tanh();
        self.push(t, [(a, 1.0 - t * t), (NONE, 0.0)])
    }

    pub fn sum(&mut self, xs: &[usize]) -> usize {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    /// d out / d node for every node.
    pub fn grad(&self, out: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.vals.len()];
        g[out] = 1.0;
        for i in (0..=out).rev() {
            if g[i] == 0.0 {
                continue;
            }
            for &(p, d) in &self.parents[i] {
                if p != NONE {
                    g[p] += g[i] * d;
                }
            }
        }
        g
    }
}

/// Moves every parameter off its structured initial value: weights and
/// peepholes uniform in `+-0.5`, biases in `+-0.5`, activation scales in
/// `[0.5, 1.5]`. Frozen tensors stay put.
pub fn randomize(model: &mut Model, rng: &mut Rng) {
    let infos = model.param_infos();
    for (info, t) in infos.iter().zip(model.tensors_mut()) {
        if !info.trainable {
            continue;
        }
        for v in t.as_mut_slice() {
            *v = match info.kind {
                ParamKind::Eta | ParamKind::Gamma => rng.uniform_range(0.5, 1.5),
                _ => rng.uniform_range(-0.5, 0.5),
            };
        }
    }
}

pub fn random_regression_seq(rng: &mut Rng, len: usize, x: usize, k: usize, every: usize) -> Sequence {
    Sequence {
        inputs: Tensor::uniform(len, x, 1.0, rng),
        targets: (0..len)
            .map(|t| {
                if (t + 1) % every == 0 {
                    Target::Value((0..k).map(|_| rng.normal()).collect())
                } else {
                    Target::None
                }
            })
            .collect(),
    }
}

pub fn random_class_seq(rng: &mut Rng, len: usize, x: usize, k: usize) -> Sequence {
    Sequence {
        inputs: Tensor::uniform(len, x, 1.0, rng),
        targets: (0..len).map(|_| Target::Class(rng.below(k))).collect(),
    }
}

/// Largest elementwise difference scaled by the largest reference entry.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Loss and gradients of a one-layer semi-tied LSTM with a linear head,
/// computed on a tape where every time step owns a private copy of every
/// layer parameter. Layer gradients are the sums over the copies; the head
/// is shared.
pub fn unrolled_stu_oracle(model: &Model, seq: &Sequence) -> (f64, BTreeMap<String, Vec<f64>>) {
    let stu_core::layers::Layer::Lstm(p) = &model.layers[0] else {
        panic!("oracle needs an LSTM layer")
    };
    assert!(p.is_tied(), "oracle covers the semi-tied layer");
    assert_eq!(model.layers.len(), 1);
    assert_eq!(model.head.kind(), HeadKind::Linear);
    let names: Vec<String> = p.param_infos("").into_iter().map(|i| i.name).collect();
    let values: Vec<&Tensor> = p.tensors();
    let h = p.hidden();
    let x_dim = p.input_dim();

    let mut tape = Tape::default();
    let head_w: Vec<usize> = model.head.w.as_slice().iter().map(|&v| tape.var(v)).collect();
    let head_b: Vec<usize> = model.head.b.as_slice().iter().map(|&v| tape.var(v)).collect();
    let k = model.head.b.len();

    let mut clones: Vec<BTreeMap<String, Vec<usize>>> = Vec::new();
    let zero = tape.var(0.0);
    let mut h_prev = vec![zero; h];
    let mut c_prev = vec![zero; h];
    let mut losses = Vec::new();

    for t in 0..seq.len() {
        let mut copy = BTreeMap::new();
        for (n, v) in names.iter().zip(&values) {
            let ids: Vec<usize> = v.as_slice().iter().map(|&x| tape.var(x)).collect();
            copy.insert(n.clone(), ids);
        }
        let get = |name: &str| -> &Vec<usize> { &copy[name] };
        let pick = |base: &str, unit: &str| -> String {
            let tagged = format!("{base}_{unit}");
            if copy.contains_key(&tagged) {
                tagged
            } else {
                base.to_owned()
            }
        };

        let x: Vec<usize> = seq.inputs.row(t).iter().map(|&v| tape.var(v)).collect();
        let mut e = Vec::with_capacity(h);
        for j in 0..h {
            let mut terms = Vec::new();
            for i in 0..x_dim {
                terms.push(tape.mul(get("w")[j * x_dim + i], x[i]));
            }
            for i in 0..h {
                terms.push(tape.mul(get("u")[j * h + i], h_prev[i]));
            }
            e.push(tape.sum(&terms));
        }
        let pre = |tape: &mut Tape, unit: &str, j: usize| -> usize {
            let b = copy[&pick("b", unit)][j];
            tape.add(e[j], b)
        };
        let act = |tape: &mut Tape, unit: &str, a: usize, j: usize, sig: bool| -> usize {
            let eta = copy[&format!("eta_{unit}")][j];
            let gamma = copy[&format!("gamma_{unit}")][j];
            let ga = tape.mul(gamma, a);
            let f = if sig { tape.sigmoid(ga) } else { tape.tanh(ga) };
            tape.mul(eta, f)
        };
        let mut c = Vec::with_capacity(h);
        let mut hs = Vec::with_capacity(h);
        for j in 0..h {
            let vi = copy[&pick("v", "i")][j];
            let vf = copy[&pick("v", "f")][j];
            let vo = copy[&pick("v", "o")][j];

            let a_i = pre(&mut tape, "i", j);
            let peep_i = tape.mul(vi, c_prev[j]);
            let a_i = tape.add(a_i, peep_i);
            let gi = act(&mut tape, "i", a_i, j, true);

            let a_f = pre(&mut tape, "f", j);
            let peep_f = tape.mul(vf, c_prev[j]);
            let a_f = tape.add(a_f, peep_f);
            let gf = act(&mut tape, "f", a_f, j, true);

            let a_c = pre(&mut tape, "c", j);
            let cand = act(&mut tape, "c", a_c, j, false);

            let keep = tape.mul(gf, c_prev[j]);
            let write = tape.mul(gi, cand);
            let cj = tape.add(keep, write);

            let a_o = pre(&mut tape, "o", j);
            let peep_o = tape.mul(vo, cj);
            let a_o = tape.add(a_o, peep_o);
            let go = act(&mut tape, "o", a_o, j, true);

            let tc = tape.tanh(cj);
            hs.push(tape.mul(go, tc));
            c.push(cj);
        }

        if let Target::Value(target) = &seq.targets[t] {
            let mut sq = Vec::new();
            for r in 0..k {
                let mut terms: Vec<usize> = (0..h).map(|i| tape.mul(head_w[r * h + i], hs[i])).collect();
                terms.push(head_b[r]);
                let z = tape.sum(&terms);
                let tv = tape.var(target[r]);
                let d = tape.sub(z, tv);
                sq.push(tape.mul(d, d));
            }
            losses.push(tape.sum(&sq));
        }
        clones.push(copy);
        h_prev = hs;
        c_prev = c;
    }

    let total = tape.sum(&losses);
    let loss = tape.scale(total, 1.0 / losses.len() as f64);
    let g = tape.grad(loss);

    let mut out = BTreeMap::new();
    for n in &names {
        let mut acc = vec![0.0; clones[0][n].len()];
        for copy in &clones {
            for (a, &id) in acc.iter_mut().zip(&copy[n]) {
                *a += g[id];
            }
        }
        out.insert(format!("layer0.{n}"), acc);
    }
    out.insert("head.w".into(), head_w.iter().map(|&i| g[i]).collect());
    out.insert("head.b".into(), head_b.iter().map(|&i| g[i]).collect());
    (tape.val(loss), out)
}

/// Forward pass of a standard or projected LSTM with plain loops over
/// scalars, one unit at a time. Returns `(h, c)` per step.
pub fn scalar_lstm(p: &LstmParams, inputs: &Tensor) -> Vec<(Vec<f64>, Vec<f64>)> {
    let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
    let h = p.hidden();
    let x_dim = p.input_dim();
    let r = p.output_dim();
    let mut h_prev = vec![0.0; r];
    let mut c_prev = vec![0.0; h];
    let mut out = Vec::new();
    for t in 0..inputs.rows() {
        let x = inputs.row(t);
        let pre = |g: usize, j: usize| -> f64 {
            let mut a = p.b[g].as_slice()[j];
            for i in 0..x_dim {
                a += p.w[g].get(j, i) * x[i];
            }
            for i in 0..r {
                a += p.u[g].get(j, i) * h_prev[i];
            }
            a
        };
        let mut c = vec![0.0; h];
        let mut h_full = vec![0.0; h];
        for j in 0..h {
            let i_g = sig(pre(0, j) + p.v[0].as_slice()[j] * c_prev[j]);
            let f_g = sig(pre(1, j) + p.v[1].as_slice()[j] * c_prev[j]);
            let cand = pre(3, j).tanh();
            c[j] = f_g * c_prev[j] + i_g * cand;
            let o_g = sig(pre(2, j) + p.v[2].as_slice()[j] * c[j]);
            h_full[j] = o_g * c[j].tanh();
        }
        let h_out = match &p.proj {
            Some(m) => (0..r)
                .map(|k| (0..h).map(|j| m.get(k, j) * h_full[j]).sum())
                .collect(),
            None => h_full,
        };
        out.push((h_out.clone(), c.clone()));
        h_prev = h_out;
        c_prev = c;
    }
    out
}
