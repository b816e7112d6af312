use crate::error::{Error, Result};
use crate::layers::ParamInfo;
use crate::model::{Model, Sequence};
use crate::tensor::Tensor;

/// One gradient buffer per model tensor, in [`Model::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore {
    infos: Vec<ParamInfo>,
    grads: Vec<Tensor>,
}

impl GradStore {
    pub fn zeros(model: &Model) -> Self {
        GradStore {
            infos: model.param_infos(),
            grads: model.tensors().into_iter().map(Tensor::zeros_like).collect(),
        }
    }

    /// Takes ownership of model-shaped gradients.
    pub fn from_model(grads: Model) -> Self {
        let infos = grads.param_infos();
        let mut grads = grads;
        let grads = grads.tensors_mut().into_iter().map(std::mem::take).collect();
        GradStore { infos, grads }
    }

    pub fn infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.grads
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.infos.iter().position(|i| i.name == name).map(|k| &self.grads[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamInfo, &Tensor)> {
        self.infos.iter().zip(&self.grads)
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, k: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(k));
    }

    pub fn add_assign(&mut self, other: &GradStore) -> Result<()> {
        if self.infos != other.infos {
            return Err(Error::Consistency("gradient stores belong to different models".into()));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

/// Loss and gradients of one chunk of `unfold_steps` frames, starting from
/// a zero recurrent state.
///
/// All gradients are of the loss averaged over the chunk's supervised
/// frames; gradients of recurrent-layer parameters are further divided by
/// `unfold_steps`.
pub fn bptt_chunk(model: &Model, chunk: &Sequence, unfold_steps: usize) -> Result<(f64, GradStore)> {
    if unfold_steps == 0 || chunk.len() != unfold_steps {
        return Err(Error::Usage(format!(
            "chunk has {} frames but unfold_steps is {unfold_steps}",
            chunk.len()
        )));
    }
    let (loss, grads) = model.loss_and_grads(chunk)?;
    let mut store = GradStore::from_model(grads);
    let k = 1.0 / unfold_steps as f64;
    for (info, g) in store.infos.iter().zip(store.grads.iter_mut()) {
        if info.recurrent {
            g.scale(k);
        }
    }
    Ok((loss, store))
}
