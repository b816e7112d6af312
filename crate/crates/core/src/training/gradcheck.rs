use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Model, Sequence};
use crate::rng::Rng;
use crate::training::GradStore;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms; below it the difference quotient is dominated by
/// round-off in the loss.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Tensors with more coordinates are checked on a random subsample.
    pub max_coords: usize,
    /// Seeds the subsample.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            max_coords: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel: f64,
    pub mean_rel: f64,
    pub coords: usize,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
}

/// Per-tensor agreement, worst tensor first.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.tensors.first().map_or(0.0, |t| t.max_rel)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tensor,coords,max_rel,mean_rel")?;
        for t in &self.tensors {
            writeln!(f, "{},{},{:.3e},{:.3e}", t.name, t.coords, t.max_rel, t.mean_rel)?;
        }
        write!(f, "max relative error {:.3e} (eps {:e})", self.max_rel(), self.eps)
    }
}

fn batch_loss(model: &Model, batch: &[Sequence]) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        total += model.loss(s)?;
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of the batch loss: the mean over sequences of each
/// sequence's mean frame loss.
pub fn analytic_grads(model: &Model, batch: &[Sequence]) -> Result<GradStore> {
    if batch.is_empty() {
        return Err(Error::Usage("gradient check needs at least one sequence".into()));
    }
    let mut store = GradStore::zeros(model);
    for s in batch {
        let (_, g) = model.loss_and_grads(s)?;
        store.add_assign(&GradStore::from_model(g))?;
    }
    store.scale(1.0 / batch.len() as f64);
    Ok(store)
}

/// Compares `analytic` to central differences of the batch loss on every
/// trainable tensor.
pub fn compare_grads(
    model: &Model,
    batch: &[Sequence],
    eps: f64,
    analytic: &GradStore,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Usage(format!("eps must be positive, got {eps}")));
    }
    if batch.is_empty() {
        return Err(Error::Usage("gradient check needs at least one sequence".into()));
    }
    if analytic.infos() != model.param_infos().as_slice() {
        return Err(Error::Consistency("gradients do not belong to this model".into()));
    }
    let mut rng = Rng::new(opts.seed);
    let mut jobs = Vec::new();
    for (k, (info, g)) in analytic.iter().enumerate() {
        if !info.trainable || g.is_empty() {
            continue;
        }
        let n = g.len();
        let mut coords: Vec<usize> = (0..n).collect();
        if n > opts.max_coords {
            rng.shuffle(&mut coords);
            coords.truncate(opts.max_coords.max(1));
            coords.sort_unstable();
        }
        jobs.extend(coords.into_iter().map(|j| (k, j)));
    }

    let rels: Vec<(usize, usize, f64)> = jobs
        .par_iter()
        .map(|&(k, j)| {
            let mut m = model.clone();
            let base = m.tensors()[k].as_slice()[j];
            m.tensors_mut()[k].as_mut_slice()[j] = base + eps;
            let plus = batch_loss(&m, batch)?;
            m.tensors_mut()[k].as_mut_slice()[j] = base - eps;
            let minus = batch_loss(&m, batch)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.tensors()[k].as_slice()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            Ok((k, j, rel))
        })
        .collect::<Result<_>>()?;

    let mut tensors: Vec<TensorCheck> = Vec::new();
    for (k, j, rel) in rels {
        let name = &analytic.infos()[k].name;
        match tensors.last_mut() {
            Some(t) if &t.name == name => {
                if rel > t.max_rel {
                    t.max_rel = rel;
                    t.worst_index = j;
                }
                t.mean_rel += rel;
                t.coords += 1;
            }
            _ => tensors.push(TensorCheck {
                name: name.clone(),
                max_rel: rel,
                mean_rel: rel,
                coords: 1,
                worst_index: j,
            }),
        }
    }
    for t in &mut tensors {
        t.mean_rel /= t.coords as f64;
    }
    tensors.sort_by(|a, b| b.max_rel.total_cmp(&a.max_rel));
    Ok(GradCheckReport { eps, tensors })
}

/// Central-difference check of the model's analytic gradients.
pub fn finite_diff_check(model: &Model, batch: &[Sequence], eps: f64, opts: GradCheckOptions) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Usage(format!("eps must be positive, got {eps}")));
    }
    let analytic = analytic_grads(model, batch)?;
    compare_grads(model, batch, eps, &analytic, opts)
}
