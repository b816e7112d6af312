mod common;

use common::{rel_err, randomize, random_regression_seq, scalar_lstm, unrolled_stu_oracle};
use stu_core::layers::{CellState, HeadKind, HeadSpec, Layer, LayerSpec, LstmVariant, StuFlags};
use stu_core::model::Model;
use stu_core::rng::Rng;
use stu_core::tensor::Tensor;
use stu_core::training::bptt_chunk;

fn random_layer(variant: LstmVariant, x: usize, h: usize, seed: u64) -> Model {
    let layers = [LayerSpec::Lstm {
        input: x,
        hidden: h,
        variant,
    }];
    let out = layers[0].output_dim();
    let head = HeadSpec {
        input: out,
        output: 2,
        kind: HeadKind::Linear,
    };
    let mut rng = Rng::new(seed);
    let mut m = Model::new(&layers, head).unwrap();
    randomize(&mut m, &mut rng);
    m
}

fn check_against_scalar_loops(variant: LstmVariant, h: usize, seed: u64) {
    let m = random_layer(variant, 3, h, seed);
    let Layer::Lstm(p) = &m.layers[0] else { unreachable!() };
    let inputs = Tensor::uniform(7, 3, 1.0, &mut Rng::new(seed + 1000));
    let want = scalar_lstm(p, &inputs);
    let mut state = CellState::zeros(p);
    for (t, (wh, wc)) in want.iter().enumerate() {
        let (next, _) = p.step(inputs.row(t), &state).unwrap();
        assert!(rel_err(&next.h, wh) < 1e-12, "h at step {t}");
        assert!(rel_err(&next.c, wc) < 1e-12, "c at step {t}");
        state = next;
    }
}

#[test]
fn lstm_matches_scalar_loops_seed_11() {
    check_against_scalar_loops(LstmVariant::Standard, 4, 11);
}

#[test]
fn lstmp_matches_scalar_loops_seed_13() {
    check_against_scalar_loops(LstmVariant::Projected { proj: 3 }, 6, 13);
}

fn unrolled_case(flags: StuFlags, seed: u64) -> f64 {
    let m = random_layer(LstmVariant::SemiTied(flags), 3, 4, seed);
    let seq = random_regression_seq(&mut Rng::new(seed + 1), 20, 3, 2, 1);
    let (oracle_loss, oracle) = unrolled_stu_oracle(&m, &seq);
    let (loss, grads) = bptt_chunk(&m, &seq, 20).unwrap();
    assert!((loss - oracle_loss).abs() <= 1e-12 * oracle_loss.abs());
    let mut worst = 0.0f64;
    for (info, g) in grads.iter() {
        if !info.trainable {
            continue;
        }
        let want = &oracle[&info.name];
        let k = if info.recurrent { 20.0 } else { 1.0 };
        let got: Vec<f64> = g.as_slice().iter().map(|v| v * k).collect();
        let err = rel_err(&got, want);
        assert!(err <= 1e-10, "{}: {err:e}", info.name);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn tied_gradients_times_unfold_equal_unrolled_clone_sums_seed_29() {
    unrolled_case(StuFlags::default(), 29);
}

#[test]
fn unrolled_clone_sums_hold_for_untied_flags() {
    unrolled_case(
        StuFlags {
            untie_v: true,
            ..Default::default()
        },
        31,
    );
    unrolled_case(
        StuFlags {
            untie_b: true,
            frozen_eta: true,
            ..Default::default()
        },
        37,
    );
}
