//! A stack of hidden layers topped by an output head, run over sequences.

use crate::error::{Error, Result};
use crate::layers::{
    head::argmax, layer_backward, CellState, Head, HeadKind, HeadSpec, Layer, LayerSpec, ParamInfo, StepCache,
    Target, Upstream,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Frames of one sequence (`T x X`) with per-frame supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub inputs: Tensor,
    pub targets: Vec<Target>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    /// Frames `start..start+len` as an owned sequence.
    pub fn slice(&self, start: usize, len: usize) -> Sequence {
        let x = self.inputs.cols();
        let data = self.inputs.as_slice()[start * x..(start + len) * x].to_vec();
        Sequence {
            inputs: Tensor::new(len, x, data).expect("slice within bounds"),
            targets: self.targets[start..start + len].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<Layer>,
    pub head: Head,
}

/// Forward pass over a sequence with everything backward needs.
pub struct Trace {
    /// `caches[layer][t]`.
    caches: Vec<Vec<StepCache>>,
    /// Input to the head at each frame.
    top: Vec<Vec<f64>>,
    /// Head outputs at each frame.
    pub outputs: Vec<Vec<f64>>,
}

/// Summed loss statistics of a sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSum {
    pub loss: f64,
    /// Sum of squared errors (regression) or of correct frames (classification).
    pub score: f64,
    pub frames: usize,
}

impl Model {
    /// Zero-initialized model; checks the dimension chain.
    pub fn new(layers: &[LayerSpec], head: HeadSpec) -> Result<Self> {
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Usage(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        if let Some(last) = layers.last() {
            if last.output_dim() != head.input {
                return Err(Error::Usage(format!(
                    "last layer emits {} values but the head expects {}",
                    last.output_dim(),
                    head.input
                )));
            }
        }
        Ok(Model {
            layers: layers.iter().map(LayerSpec::build).collect(),
            head: Head::new(head),
        })
    }

    /// Weights uniform in `+-scale/sqrt(fan_in)`; biases and peepholes
    /// zero; activation scales one.
    pub fn init(layers: &[LayerSpec], head: HeadSpec, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut m = Model::new(layers, head)?;
        for layer in &mut m.layers {
            let s = scale / (layer.fan_in() as f64).sqrt();
            layer.randomize_weights(s, rng);
        }
        let s = scale / (head.input as f64).sqrt();
        m.head.w = Tensor::uniform(head.output, head.input, s, rng);
        Ok(m)
    }

    /// Sets every LSTM forget-gate bias that is not shared with other units.
    pub fn set_forget_bias(&mut self, value: f64) {
        for layer in &mut self.layers {
            if let Layer::Lstm(p) = layer {
                if let Some(b) = p.forget_bias_mut() {
                    b.fill(value);
                }
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.head.w.cols(), Layer::input_dim)
    }

    pub fn param_infos(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            out.extend(l.param_infos(&format!("layer{k}.")));
        }
        out.extend(self.head.param_infos("head."));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.layers.iter().flat_map(Layer::tensors).collect();
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(Layer::tensors_mut).collect();
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn zeros_like(&self) -> Model {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    fn check_input(&self, seq: &Sequence) -> Result<()> {
        if seq.inputs.cols() != self.input_dim() {
            return Err(Error::Usage(format!(
                "model expects {}-dim frames, data has {}",
                self.input_dim(),
                seq.inputs.cols()
            )));
        }
        if seq.targets.len() != seq.len() {
            return Err(Error::Usage("one target slot per frame required".into()));
        }
        Ok(())
    }

    /// Runs the whole stack over `inputs`, starting every recurrent layer
    /// from a zero state.
    pub fn forward(&self, inputs: &Tensor) -> Result<Trace> {
        let steps = inputs.rows();
        let mut xs: Vec<Vec<f64>> = (0..steps).map(|t| inputs.row(t).to_vec()).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut layer_caches = Vec::with_capacity(steps);
            let mut ys = Vec::with_capacity(steps);
            match layer {
                Layer::Lstm(p) => {
                    let mut state = CellState::zeros(p);
                    for x in &xs {
                        let (next, cache) = p.step(x, &state)?;
                        ys.push(next.h.clone());
                        layer_caches.push(StepCache::Lstm(cache));
                        state = next;
                    }
                }
                Layer::Highway(p) => {
                    for x in &xs {
                        let (y, cache) = p.forward(x)?;
                        ys.push(y);
                        layer_caches.push(StepCache::Highway(cache));
                    }
                }
            }
            caches.push(layer_caches);
            xs = ys;
        }
        let outputs = xs.iter().map(|h| self.head.forward(h)).collect();
        Ok(Trace {
            caches,
            top: xs,
            outputs,
        })
    }

    /// Loss summed over supervised frames, with task scores.
    pub fn score(&self, seq: &Sequence) -> Result<LossSum> {
        self.check_input(seq)?;
        let trace = self.forward(&seq.inputs)?;
        let mut s = LossSum::default();
        for (t, (z, target)) in trace.outputs.iter().zip(&seq.targets).enumerate() {
            if let Some((loss, _)) = self.head.loss(z, target)? {
                if !loss.is_finite() {
                    return Err(Error::NonFinite { step: t });
                }
                s.loss += loss;
                s.frames += 1;
                s.score += match (self.head.kind(), target) {
                    (HeadKind::Softmax, Target::Class(k)) => (argmax(z) == *k) as u8 as f64,
                    _ => loss,
                };
            }
        }
        Ok(s)
    }

    /// Mean loss over the supervised frames of `seq`.
    pub fn loss(&self, seq: &Sequence) -> Result<f64> {
        let s = self.score(seq)?;
        Ok(if s.frames == 0 { 0.0 } else { s.loss / s.frames as f64 })
    }

    /// Mean loss and its exact gradient by backpropagation through time.
    ///
    /// The returned gradients are shaped like the model.
    pub fn loss_and_grads(&self, seq: &Sequence) -> Result<(f64, Model)> {
        self.check_input(seq)?;
        let trace = self.forward(&seq.inputs)?;
        let steps = seq.len();
        let mut grads = self.zeros_like();

        let mut d_z: Vec<Option<Vec<f64>>> = Vec::with_capacity(steps);
        let mut total = 0.0;
        let mut frames = 0usize;
        for (t, (z, target)) in trace.outputs.iter().zip(&seq.targets).enumerate() {
            match self.head.loss(z, target)? {
                Some((loss, d)) => {
                    if !loss.is_finite() {
                        return Err(Error::NonFinite { step: t });
                    }
                    total += loss;
                    frames += 1;
                    d_z.push(Some(d));
                }
                None => d_z.push(None),
            }
        }
        if frames == 0 {
            return Ok((0.0, grads));
        }
        let norm = 1.0 / frames as f64;

        let top_dim = trace.top.first().map_or(0, Vec::len);
        let mut d_above: Vec<Vec<f64>> = trace
            .top
            .iter()
            .zip(&d_z)
            .map(|(h, d)| match d {
                Some(d) => {
                    let d: Vec<f64> = d.iter().map(|v| v * norm).collect();
                    self.head.backward(h, &d, &mut grads.head)
                }
                None => vec![0.0; top_dim],
            })
            .collect();

        for (k, layer) in self.layers.iter().enumerate().rev() {
            let caches = &trace.caches[k];
            let g = &mut grads.layers[k];
            let mut d_below = vec![Vec::new(); steps];
            match layer {
                Layer::Lstm(p) => {
                    let mut d_h_next = vec![0.0; p.output_dim()];
                    let mut d_c_next = vec![0.0; p.hidden()];
                    for t in (0..steps).rev() {
                        let d_out: Vec<f64> = d_above[t].iter().zip(&d_h_next).map(|(a, b)| a + b).collect();
                        let down = layer_backward(
                            layer,
                            &caches[t],
                            Upstream {
                                d_out: &d_out,
                                d_c: Some(&d_c_next),
                            },
                            g,
                        )?;
                        d_h_next = down.d_h_prev.expect("recurrent layer");
                        d_c_next = down.d_c_prev.expect("recurrent layer");
                        d_below[t] = down.d_x;
                    }
                }
                Layer::Highway(_) => {
                    for t in 0..steps {
                        let down = layer_backward(
                            layer,
                            &caches[t],
                            Upstream {
                                d_out: &d_above[t],
                                d_c: None,
                            },
                            g,
                        )?;
                        d_below[t] = down.d_x;
                    }
                }
            }
            d_above = d_below;
        }

        Ok((total * norm, grads))
    }
}
