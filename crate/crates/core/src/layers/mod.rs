//! Layer families: LSTM (standard, projected, semi-tied), highway
//! (plain dense, standard, semi-tied) and the output head.

mod count;
pub mod head;
pub mod highway;
pub mod lstm;
mod profile;

pub use count::{count_params, ParamCount, StackCount};
pub use head::{Head, HeadKind, HeadSpec, Target};
pub use highway::{
    highway_forward, stu_highway_forward, CandidateKind, CarryMode, HighwayCache, HighwayParams,
    HighwayVariant,
};
pub use lstm::{lstm_step, lstmp_step, stu_lstm_step, CellState, LstmCache, LstmParams, LstmVariant, StuFlags};
pub use profile::{gate_profile, spearman, GateProfileRow};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// What a trainable tensor is, for weight decay and itemized counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Input or recurrent weight matrix.
    Weight,
    Bias,
    Peephole,
    Projection,
    Eta,
    Gamma,
}

impl ParamKind {
    /// Weight decay only touches matrices.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Projection)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    pub trainable: bool,
    /// Belongs to a recurrent layer (gradient divided by the unfold length).
    pub recurrent: bool,
}

/// Structural description of one hidden layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Lstm {
        input: usize,
        hidden: usize,
        variant: LstmVariant,
    },
    Dense {
        input: usize,
        output: usize,
        activation: CandidateKind,
    },
    Highway {
        dim: usize,
        activation: CandidateKind,
        carry: CarryMode,
    },
    StuHighway {
        dim: usize,
        activation: CandidateKind,
        carry: CarryMode,
    },
}

impl LayerSpec {
    pub fn input_dim(&self) -> usize {
        match *self {
            LayerSpec::Lstm { input, .. } | LayerSpec::Dense { input, .. } => input,
            LayerSpec::Highway { dim, .. } | LayerSpec::StuHighway { dim, .. } => dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            LayerSpec::Lstm { hidden, variant, .. } => match variant {
                LstmVariant::Projected { proj } => proj,
                _ => hidden,
            },
            LayerSpec::Dense { output, .. } => output,
            LayerSpec::Highway { dim, .. } | LayerSpec::StuHighway { dim, .. } => dim,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            LayerSpec::Lstm { variant, .. } => match variant {
                LstmVariant::Standard => "lstm",
                LstmVariant::Projected { .. } => "lstmp",
                LstmVariant::SemiTied(_) => "stu_lstm",
            },
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Highway { .. } => "highway",
            LayerSpec::StuHighway { .. } => "stu_highway",
        }
    }

    /// Zero-initialized layer (activation scales start at one).
    pub fn build(&self) -> Layer {
        match *self {
            LayerSpec::Lstm {
                input,
                hidden,
                variant,
            } => Layer::Lstm(LstmParams::new(variant, input, hidden)),
            LayerSpec::Dense {
                input,
                output,
                activation,
            } => Layer::Highway(HighwayParams::dense(input, output, activation)),
            LayerSpec::Highway {
                dim,
                activation,
                carry,
            } => Layer::Highway(HighwayParams::highway(dim, activation, carry)),
            LayerSpec::StuHighway {
                dim,
                activation,
                carry,
            } => Layer::Highway(HighwayParams::semi_tied(dim, activation, carry)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Lstm(LstmParams),
    Highway(HighwayParams),
}

/// Intermediate values of one forward step of any layer.
#[derive(Debug, Clone, PartialEq)]
pub enum StepCache {
    Lstm(LstmCache),
    Highway(HighwayCache),
}

/// Gradients flowing into a layer step from above (and from the future).
#[derive(Debug, Clone, Copy)]
pub struct Upstream<'a> {
    pub d_out: &'a [f64],
    /// Memory-cell gradient from step `t+1`; recurrent layers only.
    pub d_c: Option<&'a [f64]>,
}

/// Gradients a layer step hands back to its input and previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct Downstream {
    pub d_x: Vec<f64>,
    pub d_h_prev: Option<Vec<f64>>,
    pub d_c_prev: Option<Vec<f64>>,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Lstm(p) => p.input_dim(),
            Layer::Highway(p) => p.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Lstm(p) => p.output_dim(),
            Layer::Highway(p) => p.output_dim(),
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Layer::Lstm(_))
    }

    pub fn param_infos(&self, prefix: &str) -> Vec<ParamInfo> {
        match self {
            Layer::Lstm(p) => p.param_infos(prefix),
            Layer::Highway(p) => p.param_infos(prefix),
        }
    }

    /// All tensors, in the same order as [`Layer::param_infos`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Layer::Lstm(p) => p.tensors(),
            Layer::Highway(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Lstm(p) => p.tensors_mut(),
            Layer::Highway(p) => p.tensors_mut(),
        }
    }

    pub fn zeros_like(&self) -> Layer {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Uniform weights in `+-scale`; biases, peepholes and scales untouched.
    pub fn randomize_weights(&mut self, scale: f64, rng: &mut Rng) {
        let infos = self.param_infos("");
        for (info, t) in infos.iter().zip(self.tensors_mut()) {
            if info.kind.decays() {
                *t = Tensor::uniform(t.rows(), t.cols(), scale, rng);
            }
        }
    }

    /// Number of inputs feeding each unit (input plus recurrent width).
    pub fn fan_in(&self) -> usize {
        match self {
            Layer::Lstm(p) => p.input_dim() + p.output_dim(),
            Layer::Highway(p) => p.input_dim(),
        }
    }
}

/// Reverse mode through one step of any layer.
///
/// Parameter gradients are accumulated into `grads`, which must be shaped
/// like `params` (e.g. from [`Layer::zeros_like`]).
pub fn layer_backward(
    params: &Layer,
    cache: &StepCache,
    upstream: Upstream<'_>,
    grads: &mut Layer,
) -> Result<Downstream> {
    match (params, cache, grads) {
        (Layer::Lstm(p), StepCache::Lstm(c), Layer::Lstm(g)) => {
            let d_c = upstream.d_c.map(<[f64]>::to_vec);
            let d_c = d_c.unwrap_or_else(|| vec![0.0; p.hidden()]);
            p.backward(c, upstream.d_out, &d_c, g)
        }
        (Layer::Highway(p), StepCache::Highway(c), Layer::Highway(g)) => p.backward(c, upstream.d_out, g),
        _ => Err(Error::Consistency(
            "cache, parameters and gradient buffers belong to different layer families".into(),
        )),
    }
}
