//! Parameterised sigmoid, tanh and ReLU.
//!
//! Each activation instance carries a per-node output scale `eta` and, for
//! sigmoid and tanh, a per-node input scale `gamma`:
//!
//! ```text
//! psigmoid(a)_j = eta_j * sigmoid(gamma_j * a_j)
//! ptanh(a)_j    = eta_j * tanh(gamma_j * a_j)
//! prelu(a)_j    = eta_j * max(a_j, 0)
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActKind {
    PSigmoid,
    PTanh,
    PRelu,
}

impl ActKind {
    pub fn has_gamma(self) -> bool {
        !matches!(self, ActKind::PRelu)
    }
}

/// Per-node scales attached to one activation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ActParams {
    pub eta: Tensor,
    /// Absent for [`ActKind::PRelu`].
    pub gamma: Option<Tensor>,
    /// When set, training never updates `eta`.
    pub frozen_eta: bool,
}

impl ActParams {
    /// `eta = 1`, `gamma = 1`: the plain, unscaled function.
    pub fn identity(kind: ActKind, nodes: usize) -> Self {
        ActParams {
            eta: Tensor::filled(nodes, 1, 1.0),
            gamma: kind.has_gamma().then(|| Tensor::filled(nodes, 1, 1.0)),
            frozen_eta: false,
        }
    }

    pub fn new(eta: Vec<f64>, gamma: Option<Vec<f64>>) -> Self {
        ActParams {
            eta: Tensor::vector(eta),
            gamma: gamma.map(Tensor::vector),
            frozen_eta: false,
        }
    }

    pub fn nodes(&self) -> usize {
        self.eta.len()
    }

    pub fn zeros_like(&self) -> Self {
        ActParams {
            eta: self.eta.zeros_like(),
            gamma: self.gamma.as_ref().map(Tensor::zeros_like),
            frozen_eta: self.frozen_eta,
        }
    }

    fn check(&self, kind: ActKind, n: usize, op: &'static str) -> Result<()> {
        if self.eta.len() != n {
            return Err(Error::dim(op, (n, 1), self.eta.shape()));
        }
        match (&self.gamma, kind.has_gamma()) {
            (Some(g), true) if g.len() != n => Err(Error::dim(op, (n, 1), g.shape())),
            (None, true) => Err(Error::Usage(format!("{op}: {kind:?} needs gamma"))),
            (Some(_), false) => Err(Error::Usage(format!("{op}: PReLU carries no gamma"))),
            _ => Ok(()),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fills `out` with the activation of `a`. Lengths are assumed checked.
#[inline]
pub(crate) fn forward_slice(kind: ActKind, a: &[f64], eta: &[f64], gamma: Option<&[f64]>, out: &mut [f64]) {
    match kind {
        ActKind::PSigmoid => {
            let gamma = gamma.expect("psigmoid gamma");
            for j in 0..a.len() {
                out[j] = eta[j] * sigmoid(gamma[j] * a[j]);
            }
        }
        ActKind::PTanh => {
            let gamma = gamma.expect("ptanh gamma");
            for j in 0..a.len() {
                out[j] = eta[j] * (gamma[j] * a[j]).tanh();
            }
        }
        ActKind::PRelu => {
            for j in 0..a.len() {
                out[j] = eta[j] * a[j].max(0.0);
            }
        }
    }
}

/// Reverse mode through one activation.
///
/// Writes `d_a`, and accumulates into `d_eta` / `d_gamma` when given.
#[inline]
pub(crate) fn backward_slice(
    kind: ActKind,
    a: &[f64],
    eta: &[f64],
    gamma: Option<&[f64]>,
    upstream: &[f64],
    d_a: &mut [f64],
    mut d_eta: Option<&mut [f64]>,
    mut d_gamma: Option<&mut [f64]>,
) {
    match kind {
        ActKind::PSigmoid | ActKind::PTanh => {
            let gamma = gamma.expect("gamma");
            for j in 0..a.len() {
                let z = gamma[j] * a[j];
                let (value, slope) = if kind == ActKind::PSigmoid {
                    let s = sigmoid(z);
                    (s, s * (1.0 - s))
                } else {
                    let t = z.tanh();
                    (t, 1.0 - t * t)
                };
                let u = upstream[j];
                d_a[j] = u * eta[j] * gamma[j] * slope;
                if let Some(de) = d_eta.as_deref_mut() {
                    de[j] += u * value;
                }
                if let Some(dg) = d_gamma.as_deref_mut() {
                    dg[j] += u * eta[j] * a[j] * slope;
                }
            }
        }
        ActKind::PRelu => {
            for j in 0..a.len() {
                let u = upstream[j];
                // The subgradient at exactly zero takes the eta branch.
                d_a[j] = if a[j] >= 0.0 { u * eta[j] } else { 0.0 };
                if let Some(de) = d_eta.as_deref_mut() {
                    de[j] += u * a[j].max(0.0);
                }
            }
        }
    }
}

pub fn act_forward(kind: ActKind, a: &Tensor, p: &ActParams) -> Result<Tensor> {
    p.check(kind, a.len(), "act_forward")?;
    let mut out = a.zeros_like();
    forward_slice(
        kind,
        a.as_slice(),
        p.eta.as_slice(),
        p.gamma.as_ref().map(Tensor::as_slice),
        out.as_mut_slice(),
    );
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActGrads {
    pub d_a: Tensor,
    pub d_eta: Tensor,
    /// Zero-filled for PReLU.
    pub d_gamma: Tensor,
}

pub fn act_backward(kind: ActKind, a: &Tensor, p: &ActParams, upstream: &Tensor) -> Result<ActGrads> {
    p.check(kind, a.len(), "act_backward")?;
    if upstream.len() != a.len() {
        return Err(Error::dim("act_backward", a.shape(), upstream.shape()));
    }
    let mut d_a = a.zeros_like();
    let mut d_eta = a.zeros_like();
    let mut d_gamma = a.zeros_like();
    backward_slice(
        kind,
        a.as_slice(),
        p.eta.as_slice(),
        p.gamma.as_ref().map(Tensor::as_slice),
        upstream.as_slice(),
        d_a.as_mut_slice(),
        Some(d_eta.as_mut_slice()),
        kind.has_gamma().then_some(d_gamma.as_mut_slice()),
    );
    Ok(ActGrads { d_a, d_eta, d_gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn one(kind: ActKind, a: f64, eta: f64, gamma: f64) -> f64 {
        let p = ActParams::new(vec![eta], kind.has_gamma().then(|| vec![gamma]));
        act_forward(kind, &Tensor::vector(vec![a]), &p).unwrap().as_slice()[0]
    }

    fn grads(kind: ActKind, a: f64, eta: f64, gamma: f64) -> (f64, f64, f64) {
        let p = ActParams::new(vec![eta], kind.has_gamma().then(|| vec![gamma]));
        let g = act_backward(kind, &Tensor::vector(vec![a]), &p, &Tensor::vector(vec![1.0])).unwrap();
        (g.d_a.as_slice()[0], g.d_eta.as_slice()[0], g.d_gamma.as_slice()[0])
    }

    #[test]
    fn forward_examples() {
        assert_eq!(one(ActKind::PSigmoid, 0.0, 1.0, 1.0), 0.5);
        assert_eq!(one(ActKind::PSigmoid, 0.0, 2.0, 5.0), 1.0);
        assert_eq!(one(ActKind::PTanh, 0.0, 3.7, -1.2), 0.0);
        assert_eq!(one(ActKind::PRelu, 2.0, 0.5, 0.0), 1.0);
    }

    #[test]
    fn backward_examples() {
        assert_eq!(grads(ActKind::PSigmoid, 0.0, 2.0, 3.0), (1.5, 0.5, 0.0));
        assert_eq!(grads(ActKind::PTanh, 0.0, 1.0, 2.0), (2.0, 0.0, 0.0));
        assert_eq!(grads(ActKind::PRelu, -1.0, 5.0, 0.0), (0.0, 0.0, 0.0));
        // a = 0 takes the eta branch.
        assert_eq!(grads(ActKind::PRelu, 0.0, 5.0, 0.0).0, 5.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let p = ActParams::identity(ActKind::PSigmoid, 3);
        assert!(act_forward(ActKind::PSigmoid, &Tensor::zeros(2, 1), &p).is_err());
        let r = ActParams::identity(ActKind::PSigmoid, 2);
        assert!(act_forward(ActKind::PRelu, &Tensor::zeros(2, 1), &r).is_err());
    }

    /// Central differences of `upstream . f` against the analytic routes.
    fn fd_check(kind: ActKind, seed: u64, eps: f64) -> f64 {
        let mut rng = Rng::new(seed);
        let n = 5;
        let a = Tensor::uniform(n, 1, 3.0, &mut rng);
        let eta = Tensor::uniform(n, 1, 2.0, &mut rng);
        let gamma = kind.has_gamma().then(|| Tensor::uniform(n, 1, 2.0, &mut rng));
        let up = Tensor::uniform(n, 1, 1.0, &mut rng);
        let p = ActParams {
            eta,
            gamma,
            frozen_eta: false,
        };
        // Nodes are independent, so the difference quotient for node j only
        // needs the j-th term; summing the others would add round-off.
        let loss = |a: &Tensor, p: &ActParams, j: usize| -> f64 {
            let y = act_forward(kind, a, p).unwrap();
            y.as_slice()[j] * up.as_slice()[j]
        };
        let g = act_backward(kind, &a, &p, &up).unwrap();
        // Saturated units have gradients near zero; the floor keeps round-off
        // in the difference quotient from reading as a large relative error.
        let rel = |an: f64, num: f64| (an - num).abs() / an.abs().max(num.abs()).max(1e-4);
        let mut worst = 0.0f64;
        for j in 0..n {
            let (mut ap, mut am) = (a.clone(), a.clone());
            ap.as_mut_slice()[j] += eps;
            am.as_mut_slice()[j] -= eps;
            let num = (loss(&ap, &p, j) - loss(&am, &p, j)) / (2.0 * eps);
            worst = worst.max(rel(g.d_a.as_slice()[j], num));

            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp.eta.as_mut_slice()[j] += eps;
            pm.eta.as_mut_slice()[j] -= eps;
            let num = (loss(&a, &pp, j) - loss(&a, &pm, j)) / (2.0 * eps);
            worst = worst.max(rel(g.d_eta.as_slice()[j], num));

            if kind.has_gamma() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.gamma.as_mut().unwrap().as_mut_slice()[j] += eps;
                pm.gamma.as_mut().unwrap().as_mut_slice()[j] -= eps;
                let num = (loss(&a, &pp, j) - loss(&a, &pm, j)) / (2.0 * eps);
                worst = worst.max(rel(g.d_gamma.as_slice()[j], num));
            }
        }
        worst
    }

    #[test]
    fn psigmoid_matches_finite_differences_seed_7() {
        assert!(fd_check(ActKind::PSigmoid, 7, 1e-6) < 1e-7);
    }

    #[test]
    fn all_kinds_match_finite_differences_over_1000_points() {
        // 200 seeds x 5 nodes = 1000 points per kind.
        for kind in [ActKind::PSigmoid, ActKind::PTanh, ActKind::PRelu] {
            for seed in 0..200 {
                let err = fd_check(kind, 1000 + seed, 1e-6);
                assert!(err < 1e-6, "{kind:?} seed {seed}: {err}");
            }
        }
    }

    fn vecs(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(-6.0f64..6.0, n),
            proptest::collection::vec(-3.0f64..3.0, n),
            proptest::collection::vec(-3.0f64..3.0, n),
        )
    }

    proptest! {
        #[test]
        fn sigmoid_reflection((a, eta, gamma) in vecs(8)) {
            let p = ActParams::new(eta.clone(), Some(gamma));
            let pos = act_forward(ActKind::PSigmoid, &Tensor::vector(a.clone()), &p).unwrap();
            let neg = act_forward(ActKind::PSigmoid, &Tensor::vector(a.iter().map(|x| -x).collect()), &p).unwrap();
            for j in 0..a.len() {
                prop_assert!((pos.as_slice()[j] + neg.as_slice()[j] - eta[j]).abs() <= 1e-12);
            }
        }

        #[test]
        fn tanh_is_odd((a, eta, gamma) in vecs(8)) {
            let p = ActParams::new(eta, Some(gamma));
            let pos = act_forward(ActKind::PTanh, &Tensor::vector(a.clone()), &p).unwrap();
            let neg = act_forward(ActKind::PTanh, &Tensor::vector(a.iter().map(|x| -x).collect()), &p).unwrap();
            for j in 0..a.len() {
                prop_assert_eq!(neg.as_slice()[j], -pos.as_slice()[j]);
            }
        }

        #[test]
        fn relu_positively_homogeneous((a, eta, _g) in vecs(8), c in 1e-3f64..1e3) {
            let p = ActParams::new(eta, None);
            let base = act_forward(ActKind::PRelu, &Tensor::vector(a.clone()), &p).unwrap();
            let scaled = act_forward(ActKind::PRelu, &Tensor::vector(a.iter().map(|x| c * x).collect()), &p).unwrap();
            for j in 0..a.len() {
                let want = c * base.as_slice()[j];
                prop_assert!((scaled.as_slice()[j] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }

        #[test]
        fn unit_scales_reduce_to_plain(a in proptest::collection::vec(-20.0f64..20.0, 1..16)) {
            let n = a.len();
            let t = Tensor::vector(a.clone());
            let s = act_forward(ActKind::PSigmoid, &t, &ActParams::identity(ActKind::PSigmoid, n)).unwrap();
            let h = act_forward(ActKind::PTanh, &t, &ActParams::identity(ActKind::PTanh, n)).unwrap();
            let r = act_forward(ActKind::PRelu, &t, &ActParams::identity(ActKind::PRelu, n)).unwrap();
            for j in 0..n {
                prop_assert!((s.as_slice()[j] - 1.0 / (1.0 + (-a[j]).exp())).abs() <= 1e-15);
                prop_assert!((h.as_slice()[j] - a[j].tanh()).abs() <= 1e-15);
                prop_assert!((r.as_slice()[j] - a[j].max(0.0)).abs() <= 1e-15);
            }
        }

        // Restricted to |gamma * a| < 30: beyond roughly 37 the sigmoid
        // rounds to exactly 1.0 in double precision.
        #[test]
        fn sigmoid_strictly_bounded_by_eta(
            a in -10.0f64..10.0,
            gamma in -3.0f64..3.0,
            eta in prop_oneof![-5.0f64..-1e-3, 1e-3f64..5.0],
        ) {
            let y = one(ActKind::PSigmoid, a, eta, gamma);
            prop_assert!(y.abs() < eta.abs());
        }
    }
}
