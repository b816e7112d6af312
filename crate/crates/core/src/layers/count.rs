use std::fmt;

use super::{Head, HeadSpec, LayerSpec, ParamInfo, ParamKind};
use crate::tensor::Tensor;

/// Trainable scalars of one layer, itemized by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParamCount {
    pub weights: u64,
    pub biases: u64,
    pub peepholes: u64,
    pub projection: u64,
    pub eta: u64,
    pub gamma: u64,
}

impl ParamCount {
    pub fn total(&self) -> u64 {
        self.weights + self.biases + self.peepholes + self.projection + self.eta + self.gamma
    }

    fn add(&mut self, info: &ParamInfo, n: u64) {
        if !info.trainable {
            return;
        }
        let slot = match info.kind {
            ParamKind::Weight => &mut self.weights,
            ParamKind::Bias => &mut self.biases,
            ParamKind::Peephole => &mut self.peepholes,
            ParamKind::Projection => &mut self.projection,
            ParamKind::Eta => &mut self.eta,
            ParamKind::Gamma => &mut self.gamma,
        };
        *slot += n;
    }

    fn of(infos: &[ParamInfo], tensors: &[&Tensor]) -> Self {
        let mut c = ParamCount::default();
        for (i, t) in infos.iter().zip(tensors) {
            c.add(i, t.len() as u64);
        }
        c
    }

    fn plus(mut self, o: &ParamCount) -> Self {
        self.weights += o.weights;
        self.biases += o.biases;
        self.peepholes += o.peepholes;
        self.projection += o.projection;
        self.eta += o.eta;
        self.gamma += o.gamma;
        self
    }
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "weights={} biases={} peepholes={} projection={} eta={} gamma={} total={}",
            self.weights,
            self.biases,
            self.peepholes,
            self.projection,
            self.eta,
            self.gamma,
            self.total()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackCount {
    pub layers: Vec<(LayerSpec, ParamCount)>,
    pub head: Option<ParamCount>,
}

impl StackCount {
    /// Hidden layers only.
    pub fn hidden(&self) -> ParamCount {
        self.layers.iter().fold(ParamCount::default(), |acc, (_, c)| acc.plus(c))
    }

    pub fn total(&self) -> ParamCount {
        let hidden = self.hidden();
        match &self.head {
            Some(h) => hidden.plus(h),
            None => hidden,
        }
    }
}

/// Exact count of trainable scalars per layer and for the whole stack.
pub fn count_params(layers: &[LayerSpec], head: Option<&HeadSpec>) -> StackCount {
    let layers = layers
        .iter()
        .map(|spec| {
            let layer = spec.build();
            (*spec, ParamCount::of(&layer.param_infos(""), &layer.tensors()))
        })
        .collect();
    let head = head.map(|h| {
        let head = Head::new(*h);
        ParamCount::of(&head.param_infos(""), &head.tensors())
    });
    StackCount { layers, head }
}
