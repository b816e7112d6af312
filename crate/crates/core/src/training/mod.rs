//! Truncated-BPTT training: chunked gradients, SGD with weight decay, a
//! NewBob-style learning-rate schedule, gradient checking and checkpoints.

mod bptt;
pub mod checkpoint;
mod gradcheck;
mod newbob;
mod sgd;
mod trainer;

pub use bptt::{bptt_chunk, GradStore};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{analytic_grads, compare_grads, finite_diff_check, GradCheckOptions, GradCheckReport, TensorCheck};
pub use newbob::{Action, NewBob, Phase};
pub use sgd::sgd_step;
pub use trainer::{make_chunks, run_epoch, EpochRecord, TrainState};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Frames per BPTT chunk; tied recurrent gradients are divided by it.
    pub unfold_steps: usize,
    /// Frames per update. Each update averages `minibatch / unfold_steps`
    /// chunks (at least one).
    pub minibatch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Relative cv improvement below which the rate starts halving.
    pub ramp_threshold: f64,
    /// Relative cv improvement below which halving stops training.
    pub stop_threshold: f64,
    pub seed: u64,
    /// Weights start uniform in `+-init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
    /// Starting value of every LSTM forget-gate bias that is not shared.
    pub forget_bias: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            unfold_steps: 20,
            minibatch: 800,
            learning_rate: 0.1,
            weight_decay: 0.0,
            momentum: 0.0,
            max_epochs: 20,
            ramp_threshold: 0.005,
            stop_threshold: 0.001,
            seed: 1,
            init_scale: 1.0,
            forget_bias: 0.0,
        }
    }
}

impl TrainConfig {
    /// Number of chunks averaged per update.
    pub fn chunks_per_batch(&self) -> usize {
        (self.minibatch / self.unfold_steps.max(1)).max(1)
    }

    /// Rejects the first invalid field, naming it.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Usage(format!("{field} {why}")));
        if self.unfold_steps == 0 {
            return bad("unfold_steps", "must be at least 1");
        }
        if self.minibatch == 0 {
            return bad("minibatch", "must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", "must be finite and positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be finite and non-negative");
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return bad("momentum", "must lie in [0, 1)");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be at least 1");
        }
        if !(self.ramp_threshold.is_finite() && self.stop_threshold.is_finite()) {
            return bad("ramp_threshold", "and stop_threshold must be finite");
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad("init_scale", "must be finite and non-negative");
        }
        if !self.forget_bias.is_finite() {
            return bad("forget_bias", "must be finite");
        }
        Ok(())
    }
}
