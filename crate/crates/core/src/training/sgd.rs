use crate::error::{Error, Result};
use crate::training::{GradStore, TrainConfig, TrainState};

/// One SGD update at the scheduler's current rate:
/// `v <- momentum * v + (g + wd * p)` then `p <- p - lr * v`, where the decay
/// term only applies to weight and projection matrices. Frozen tensors are
/// left bit-unchanged.
pub fn sgd_step(state: &mut TrainState, grads: &GradStore, config: &TrainConfig) -> Result<()> {
    let lr = state.scheduler.lr();
    let infos = state.model.param_infos();
    if infos.as_slice() != grads.infos() {
        return Err(Error::Consistency("gradients do not belong to this model".into()));
    }
    let params = state.model.tensors_mut();
    for (((info, p), v), g) in infos
        .iter()
        .zip(params)
        .zip(state.velocity.tensors_mut())
        .zip(grads.tensors())
    {
        if !info.trainable {
            continue;
        }
        let wd = if info.kind.decays() { config.weight_decay } else { 0.0 };
        for ((p, v), g) in p.as_mut_slice().iter_mut().zip(v.as_mut_slice()).zip(g.as_slice()) {
            *v = config.momentum * *v + (g + wd * *p);
            *p -= lr * *v;
        }
    }
    Ok(())
}
