//! Synthetic sequence tasks and their evaluation.
//!
//! * Adding problem: two input channels, a uniform value and a marker that
//!   is one at exactly two distinct frames. The target, given at the last
//!   frame only, is the sum of the two marked values.
//! * Frame classification: class-conditional Gaussian frames whose labels
//!   follow a sticky Markov chain, so neighbouring frames share context.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::{HeadKind, Target};
use crate::model::{LossSum, Model, Sequence};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub sequences: Vec<Sequence>,
    /// Generator name, parameters and seed the data came from.
    pub provenance: String,
}

impl SequenceDataset {
    pub fn input_dim(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.inputs.cols())
    }

    pub fn frames(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }
}

pub fn gen_adding(n: usize, length: usize, seed: u64) -> Result<SequenceDataset> {
    if length < 2 {
        return Err(Error::Usage(format!("adding problem needs length >= 2, got {length}")));
    }
    let mut rng = Rng::new(seed);
    let sequences = (0..n)
        .map(|_| {
            let mut inputs = Tensor::zeros(length, 2);
            for t in 0..length {
                inputs.set(t, 0, rng.uniform());
            }
            let first = rng.below(length);
            let mut second = rng.below(length - 1);
            if second >= first {
                second += 1;
            }
            inputs.set(first, 1, 1.0);
            inputs.set(second, 1, 1.0);
            let sum = inputs.get(first, 0) + inputs.get(second, 0);
            let mut targets = vec![Target::None; length];
            targets[length - 1] = Target::Value(vec![sum]);
            Sequence { inputs, targets }
        })
        .collect();
    Ok(SequenceDataset {
        sequences,
        provenance: format!("adding n={n} length={length} seed={seed}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTask {
    /// Total number of frames.
    pub frames: usize,
    pub dim: usize,
    pub classes: usize,
    /// Frames per sequence; the last sequence may be shorter.
    pub seq_len: usize,
    /// Standard deviation of the Gaussian around each class mean.
    pub noise: f64,
    /// Probability that the next frame keeps the current class.
    pub persistence: f64,
}

impl Default for FrameTask {
    fn default() -> Self {
        FrameTask {
            frames: 10_000,
            dim: 80,
            classes: 4,
            seq_len: 100,
            noise: 1.0,
            persistence: 0.8,
        }
    }
}

/// Class means are distinct random vertices of the `{-1, +1}^dim` cube,
/// drawn from a stream that depends on `seed` only, so every split generated
/// with the same seed shares the same means.
fn class_means(task: &FrameTask, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed).fork(0x6d65616e);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(task.classes);
    while means.len() < task.classes {
        let m: Vec<f64> = (0..task.dim)
            .map(|_| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        // With dim >= log2(classes) a fresh vertex always exists.
        if !means.contains(&m) || means.len() >= 1usize << task.dim.min(30) {
            means.push(m);
        }
    }
    means
}

pub fn gen_frame_classification(task: &FrameTask, seed: u64, means_seed: u64) -> Result<SequenceDataset> {
    if task.classes < 2 {
        return Err(Error::Usage(format!("need at least 2 classes, got {}", task.classes)));
    }
    if task.seq_len == 0 || task.dim == 0 {
        return Err(Error::Usage("seq_len and dim must be positive".into()));
    }
    if !(0.0..=1.0).contains(&task.persistence) || task.noise < 0.0 {
        return Err(Error::Usage("persistence must lie in [0, 1] and noise be non-negative".into()));
    }
    let means = class_means(task, means_seed);
    let mut rng = Rng::new(seed);
    let mut class = rng.below(task.classes);
    let mut sequences = Vec::new();
    let mut remaining = task.frames;
    while remaining > 0 {
        let len = remaining.min(task.seq_len);
        let mut inputs = Tensor::zeros(len, task.dim);
        let mut targets = Vec::with_capacity(len);
        for t in 0..len {
            if rng.uniform() >= task.persistence {
                // Move to one of the other classes uniformly.
                let k = rng.below(task.classes - 1);
                class = if k >= class { k + 1 } else { k };
            }
            for d in 0..task.dim {
                let noise = if task.noise > 0.0 { task.noise * rng.normal() } else { 0.0 };
                inputs.set(t, d, means[class][d] + noise);
            }
            targets.push(Target::Class(class));
        }
        sequences.push(Sequence { inputs, targets });
        remaining -= len;
    }
    Ok(SequenceDataset {
        sequences,
        provenance: format!(
            "frames n={} dim={} classes={} seq_len={} noise={} persistence={} seed={seed} means_seed={means_seed}",
            task.frames, task.dim, task.classes, task.seq_len, task.noise, task.persistence
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean loss per supervised frame.
    pub loss: f64,
    /// Frame accuracy for classification heads.
    pub accuracy: Option<f64>,
    /// Mean squared error for regression heads.
    pub mse: Option<f64>,
    pub frames: usize,
}

impl Metrics {
    /// Task metric: accuracy for classification, mse for regression.
    pub fn headline(&self) -> f64 {
        self.accuracy.or(self.mse).unwrap_or(self.loss)
    }
}

/// Splits each sequence into consecutive chunks of `chunk` frames (the last
/// one may be shorter), or keeps it whole when `chunk` is `None`.
pub fn chunk_sequences(data: &SequenceDataset, chunk: Option<usize>) -> Vec<Sequence> {
    let mut out = Vec::new();
    for seq in &data.sequences {
        match chunk {
            Some(c) if c < seq.len() => {
                let mut start = 0;
                while start < seq.len() {
                    let len = c.min(seq.len() - start);
                    out.push(seq.slice(start, len));
                    start += len;
                }
            }
            _ => out.push(seq.clone()),
        }
    }
    out
}

/// Mean loss and task metric over every supervised frame. Each chunk of
/// `chunk` frames starts from a zero recurrent state, as in training.
pub fn evaluate(model: &Model, data: &SequenceDataset, chunk: Option<usize>) -> Result<Metrics> {
    if data.input_dim() != model.input_dim() && !data.sequences.is_empty() {
        return Err(Error::Usage(format!(
            "model expects {}-dim frames, dataset has {}",
            model.input_dim(),
            data.input_dim()
        )));
    }
    let pieces = chunk_sequences(data, chunk);
    let sums: Vec<LossSum> = pieces.par_iter().map(|s| model.score(s)).collect::<Result<_>>()?;
    let total = sums.iter().fold(LossSum::default(), |acc, s| LossSum {
        loss: acc.loss + s.loss,
        score: acc.score + s.score,
        frames: acc.frames + s.frames,
    });
    if total.frames == 0 {
        return Err(Error::Usage("dataset has no supervised frames".into()));
    }
    let n = total.frames as f64;
    let (accuracy, mse) = match model.head.kind() {
        HeadKind::Softmax => (Some(total.score / n), None),
        HeadKind::Linear => (None, Some(total.score / n)),
    };
    Ok(Metrics {
        loss: total.loss / n,
        accuracy,
        mse,
        frames: total.frames,
    })
}

/// One frame per row: `seq,step,x0..x{X-1},target`. Unsupervised frames
/// leave the target empty; vector targets are `;`-separated.
pub fn write_csv<W: Write>(data: &SequenceDataset, mut out: W) -> std::io::Result<()> {
    let dim = data.input_dim();
    let mut header = String::from("seq,step");
    for d in 0..dim {
        header.push_str(&format!(",x{d}"));
    }
    header.push_str(",target");
    writeln!(out, "{header}")?;
    for (s, seq) in data.sequences.iter().enumerate() {
        for t in 0..seq.len() {
            let mut line = format!("{s},{t}");
            for v in seq.inputs.row(t) {
                line.push_str(&format!(",{v}"));
            }
            let target = match &seq.targets[t] {
                Target::None => String::new(),
                Target::Class(k) => k.to_string(),
                Target::Value(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            };
            writeln!(out, "{line},{target}")?;
        }
    }
    Ok(())
}
