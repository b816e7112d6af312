//! Untied clones of semi-tied layers.

use stu_core::layers::{
    layer_backward, CandidateKind, CarryMode, CellState, HighwayParams, Layer, LstmParams, LstmVariant, StepCache,
    StuFlags, Upstream,
};
use stu_core::rng::Rng;
use stu_core::tensor::Tensor;

use super::rel_err;

pub const X: usize = 3;
pub const H: usize = 5;

/// Random semi-tied LSTM (scales left at one) and its untied clone.
pub fn lstm_pair(flags: StuFlags, rng: &mut Rng) -> (LstmParams, LstmParams) {
    let mut stu = LstmParams::new(LstmVariant::SemiTied(flags), X, H);
    stu.w[0] = Tensor::uniform(H, X, 0.8, rng);
    stu.u[0] = Tensor::uniform(H, H, 0.8, rng);
    for b in &mut stu.b {
        *b = Tensor::uniform(H, 1, 0.5, rng);
    }
    for v in &mut stu.v {
        *v = Tensor::uniform(H, 1, 0.5, rng);
    }
    let mut std = LstmParams::new(LstmVariant::Standard, X, H);
    for g in 0..4 {
        std.w[g] = stu.w[0].clone();
        std.u[g] = stu.u[0].clone();
        std.b[g] = stu.b[if stu.b.len() == 1 { 0 } else { g }].clone();
    }
    for g in 0..3 {
        std.v[g] = stu.v[if stu.v.len() == 1 { 0 } else { g }].clone();
    }
    (stu, std)
}

pub fn random_state(rng: &mut Rng) -> CellState {
    CellState {
        c: (0..H).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        h: (0..H).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    }
}

pub fn sum(ts: &[Tensor]) -> Vec<f64> {
    let mut out = vec![0.0; ts[0].len()];
    for t in ts {
        for (o, v) in out.iter_mut().zip(t.as_slice()) {
            *o += v;
        }
    }
    out
}

/// Worst relative disagreement, forward and backward, for one instance.
pub fn lstm_instance(flags: StuFlags, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (stu, std) = lstm_pair(flags, &mut rng);
    let mut worst = 0.0f64;

    let mut s_stu = random_state(&mut rng);
    let mut s_std = s_stu.clone();
    let mut last = None;
    for _ in 0..4 {
        let x: Vec<f64> = (0..X).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let (a, ca) = stu.step(&x, &s_stu).unwrap();
        let (b, cb) = std.step(&x, &s_std).unwrap();
        worst = worst.max(rel_err(&a.h, &b.h)).max(rel_err(&a.c, &b.c));
        last = Some((ca, cb));
        s_stu = a;
        s_std = b;
    }

    let (ca, cb) = last.unwrap();
    let d_h: Vec<f64> = (0..H).map(|_| rng.normal()).collect();
    let d_c: Vec<f64> = (0..H).map(|_| rng.normal()).collect();
    let (stu_l, std_l) = (Layer::Lstm(stu), Layer::Lstm(std));
    let mut g_stu = stu_l.zeros_like();
    let mut g_std = std_l.zeros_like();
    let up = Upstream {
        d_out: &d_h,
        d_c: Some(&d_c),
    };
    let da = layer_backward(&stu_l, &StepCache::Lstm(ca), up, &mut g_stu).unwrap();
    let db = layer_backward(&std_l, &StepCache::Lstm(cb), up, &mut g_std).unwrap();
    worst = worst
        .max(rel_err(&da.d_x, &db.d_x))
        .max(rel_err(da.d_h_prev.as_ref().unwrap(), db.d_h_prev.as_ref().unwrap()))
        .max(rel_err(da.d_c_prev.as_ref().unwrap(), db.d_c_prev.as_ref().unwrap()));

    let (Layer::Lstm(gs), Layer::Lstm(gu)) = (&g_stu, &g_std) else { unreachable!() };
    worst = worst.max(rel_err(gs.w[0].as_slice(), &sum(&gu.w)));
    worst = worst.max(rel_err(gs.u[0].as_slice(), &sum(&gu.u)));
    if gs.b.len() == 1 {
        worst = worst.max(rel_err(gs.b[0].as_slice(), &sum(&gu.b)));
    } else {
        for g in 0..4 {
            worst = worst.max(rel_err(gs.b[g].as_slice(), gu.b[g].as_slice()));
        }
    }
    if gs.v.len() == 1 {
        worst = worst.max(rel_err(gs.v[0].as_slice(), &sum(&gu.v)));
    } else {
        for g in 0..3 {
            worst = worst.max(rel_err(gs.v[g].as_slice(), gu.v[g].as_slice()));
        }
    }
    worst
}

pub fn highway_pair(candidate: CandidateKind, carry: CarryMode, rng: &mut Rng) -> (HighwayParams, HighwayParams) {
    let mut stu = HighwayParams::semi_tied(H, candidate, carry);
    stu.w[0] = Tensor::uniform(H, H, 0.8, rng);
    stu.b[0] = Tensor::uniform(H, 1, 0.5, rng);
    let mut std = HighwayParams::highway(H, candidate, carry);
    for k in 0..std.w.len() {
        std.w[k] = stu.w[0].clone();
        std.b[k] = stu.b[0].clone();
    }
    (stu, std)
}

pub fn highway_instance(candidate: CandidateKind, carry: CarryMode, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (stu, std) = highway_pair(candidate, carry, &mut rng);
    let x: Vec<f64> = (0..H).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let (ya, ca) = stu.forward(&x).unwrap();
    let (yb, cb) = std.forward(&x).unwrap();
    let mut worst = rel_err(&ya, &yb);

    let d_y: Vec<f64> = (0..H).map(|_| rng.normal()).collect();
    let (stu_l, std_l) = (Layer::Highway(stu), Layer::Highway(std));
    let mut g_stu = stu_l.zeros_like();
    let mut g_std = std_l.zeros_like();
    let up = Upstream { d_out: &d_y, d_c: None };
    let da = layer_backward(&stu_l, &StepCache::Highway(ca), up, &mut g_stu).unwrap();
    let db = layer_backward(&std_l, &StepCache::Highway(cb), up, &mut g_std).unwrap();
    worst = worst.max(rel_err(&da.d_x, &db.d_x));
    let (Layer::Highway(gs), Layer::Highway(gu)) = (&g_stu, &g_std) else { unreachable!() };
    worst = worst.max(rel_err(gs.w[0].as_slice(), &sum(&gu.w)));
    worst.max(rel_err(gs.b[0].as_slice(), &sum(&gu.b)))
}

pub fn flags(bits: u8) -> StuFlags {
    StuFlags {
        untie_v: bits & 1 != 0,
        untie_b: bits & 2 != 0,
        frozen_eta: false,
    }
}
