use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Model, Sequence};
use crate::rng::Rng;
use crate::tasks::{evaluate, SequenceDataset};
use crate::training::{bptt_chunk, sgd_step, GradStore, NewBob, Phase, TrainConfig};

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean chunk loss over the epoch's updates.
    pub train_loss: f64,
    pub cv_loss: f64,
    /// Accuracy or mean squared error on the cv set.
    pub cv_metric: f64,
    /// Rate used during the epoch.
    pub lr: f64,
    /// Wall-clock time, or 0 when timing is off.
    pub seconds: f64,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub velocity: GradStore,
    pub scheduler: NewBob,
    /// Completed epochs.
    pub epoch: usize,
    /// Drives chunk shuffling.
    pub rng: Rng,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(model: Model, config: &TrainConfig) -> Self {
        TrainState {
            velocity: GradStore::zeros(&model),
            model,
            scheduler: NewBob::new(
                config.learning_rate,
                config.ramp_threshold,
                config.stop_threshold,
                config.max_epochs,
            ),
            epoch: 0,
            rng: Rng::new(config.seed).fork(1),
            history: Vec::new(),
        }
    }

    pub fn finished(&self, config: &TrainConfig) -> bool {
        self.scheduler.phase() == Phase::Stopped || self.epoch >= config.max_epochs
    }
}

/// Cuts every sequence into consecutive chunks of `unfold_steps` frames.
/// A shorter tail and chunks without any supervised frame are dropped.
pub fn make_chunks(data: &SequenceDataset, unfold_steps: usize) -> Vec<Sequence> {
    let mut out = Vec::new();
    for seq in &data.sequences {
        let mut start = 0;
        while start + unfold_steps <= seq.len() {
            let chunk = seq.slice(start, unfold_steps);
            if chunk.targets.iter().any(|t| t.is_some()) {
                out.push(chunk);
            }
            start += unfold_steps;
        }
    }
    out
}

/// Shuffles the chunks, runs one pass of minibatch SGD, scores the cv set
/// and advances the scheduler.
pub fn run_epoch(
    state: &mut TrainState,
    config: &TrainConfig,
    chunks: &[Sequence],
    cv: &SequenceDataset,
    wall_clock: bool,
) -> Result<EpochRecord> {
    if chunks.is_empty() {
        return Err(Error::Usage(format!(
            "no training chunk of {} frames with a supervised frame",
            config.unfold_steps
        )));
    }
    let start = Instant::now();
    let lr = state.scheduler.lr();
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    state.rng.shuffle(&mut order);

    let mut loss_sum = 0.0;
    let mut batch_grads = GradStore::zeros(&state.model);
    for batch in order.chunks(config.chunks_per_batch()) {
        let model = &state.model;
        let results: Vec<(f64, GradStore)> = batch
            .par_iter()
            .map(|&i| bptt_chunk(model, &chunks[i], config.unfold_steps))
            .collect::<Result<_>>()?;
        batch_grads.zero();
        for (loss, g) in &results {
            loss_sum += loss;
            batch_grads.add_assign(g)?;
        }
        batch_grads.scale(1.0 / batch.len() as f64);
        sgd_step(state, &batch_grads, config)?;
    }

    let metrics = evaluate(&state.model, cv, Some(config.unfold_steps))?;
    state.epoch += 1;
    state.scheduler.update(metrics.loss, state.epoch);
    let record = EpochRecord {
        epoch: state.epoch,
        train_loss: loss_sum / chunks.len() as f64,
        cv_loss: metrics.loss,
        cv_metric: metrics.headline(),
        lr,
        seconds: if wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
    };
    state.history.push(record);
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{HeadKind, HeadSpec, LayerSpec, LstmVariant, Target};
    use crate::tasks::gen_adding;
    use crate::tensor::Tensor;

    fn setup(seed: u64) -> (TrainState, TrainConfig, Vec<Sequence>, SequenceDataset) {
        let config = TrainConfig {
            unfold_steps: 10,
            minibatch: 40,
            learning_rate: 0.5,
            seed,
            ..Default::default()
        };
        let layers = [LayerSpec::Lstm {
            input: 2,
            hidden: 4,
            variant: LstmVariant::SemiTied(Default::default()),
        }];
        let head = HeadSpec {
            input: 4,
            output: 1,
            kind: HeadKind::Linear,
        };
        let model = Model::init(&layers, head, 1.0, &mut Rng::new(seed)).unwrap();
        let train = gen_adding(40, 10, 1).unwrap();
        let cv = gen_adding(10, 10, 2).unwrap();
        let chunks = make_chunks(&train, 10);
        (TrainState::new(model, &config), config, chunks, cv)
    }

    #[test]
    fn chunking_drops_tails_and_unsupervised_chunks() {
        let data = gen_adding(3, 25, 0).unwrap();
        // The only target sits at frame 24, inside the dropped tail.
        assert!(make_chunks(&data, 10).is_empty());
        assert_eq!(make_chunks(&data, 25).len(), 3);
        assert_eq!(make_chunks(&data, 5).len(), 3);
        let s = Sequence {
            inputs: Tensor::zeros(4, 1),
            targets: vec![Target::Class(0); 4],
        };
        let d = SequenceDataset {
            sequences: vec![s],
            provenance: String::new(),
        };
        assert_eq!(make_chunks(&d, 2).len(), 2);
    }

    #[test]
    fn epochs_are_deterministic() {
        let run = || {
            let (mut s, c, chunks, cv) = setup(9);
            for _ in 0..3 {
                run_epoch(&mut s, &c, &chunks, &cv, false).unwrap();
            }
            s
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|r| r.seconds == 0.0));
    }

    #[test]
    fn training_lowers_the_training_loss() {
        let (mut s, c, chunks, cv) = setup(4);
        let first = run_epoch(&mut s, &c, &chunks, &cv, false).unwrap();
        let mut last = first;
        for _ in 0..15 {
            last = run_epoch(&mut s, &c, &chunks, &cv, false).unwrap();
        }
        assert!(last.train_loss < first.train_loss, "{first:?} {last:?}");
    }

    #[test]
    fn empty_chunk_list_is_rejected() {
        let (mut s, c, _, cv) = setup(1);
        assert_eq!(run_epoch(&mut s, &c, &[], &cv, false).unwrap_err().kind(), "usage");
    }
}
