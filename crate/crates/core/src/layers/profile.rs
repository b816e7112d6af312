//! Resting-value profile of semi-tied LSTM units.
//!
//! Taking the shared activation to be one and ignoring peepholes, unit `j`
//! of a gate outputs roughly `eta_j * sigmoid(gamma_j)`; the candidate
//! outputs `eta_j * tanh(gamma_j)`.

use super::lstm::{LstmParams, LstmVariant, GATE_F, GATE_I, UNIT_C};
use crate::activations::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateProfileRow {
    pub unit: usize,
    pub input_gate: f64,
    pub forget_gate: f64,
    pub candidate: f64,
}

/// Per-unit profile, sorted by decreasing input-gate value.
pub fn gate_profile(p: &LstmParams) -> Result<Vec<GateProfileRow>> {
    if !matches!(p.variant(), LstmVariant::SemiTied(_)) {
        return Err(Error::Usage(format!(
            "gate profile needs a semi-tied LSTM layer, got {:?}",
            p.variant()
        )));
    }
    let gate = |g: usize, j: usize| {
        let a = &p.acts[g];
        let gamma = a.gamma.as_ref().map_or(1.0, |t| t.as_slice()[j]);
        (a.eta.as_slice()[j], gamma)
    };
    let mut rows: Vec<GateProfileRow> = (0..p.hidden())
        .map(|j| {
            let (ei, gi) = gate(GATE_I, j);
            let (ef, gf) = gate(GATE_F, j);
            let (ec, gc) = gate(UNIT_C, j);
            GateProfileRow {
                unit: j,
                input_gate: ei * sigmoid(gi),
                forget_gate: ef * sigmoid(gf),
                candidate: ec * gc.tanh(),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.input_gate.total_cmp(&a.input_gate));
    Ok(rows)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (ties get averaged ranks). NaN when either
/// input is constant or shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (a, b) = (rx[k] - mean, ry[k] - mean);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}
