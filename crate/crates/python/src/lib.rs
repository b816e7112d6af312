use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stu_core::config::Split;
use stu_core::layers::{count_params, gate_profile, spearman, Layer, LstmVariant, Target};
use stu_core::tasks::{self, FrameTask, SequenceDataset};
use stu_core::training::{
    finite_diff_check, load_checkpoint, make_chunks, run_epoch, save_checkpoint, GradCheckOptions, TrainState,
};
use stu_core::{parse_config, RunConfig};

create_exception!(semitied, StuError, PyException);

fn err(e: stu_core::Error) -> PyErr {
    StuError::new_err(format!("{}: {e}", e.kind()))
}

fn target_to_py(py: Python<'_>, t: &Target) -> PyResult<PyObject> {
    Ok(match t {
        Target::None => py.None(),
        Target::Class(k) => k.into_pyobject(py)?.into_any().unbind(),
        Target::Value(v) => v.clone().into_pyobject(py)?.into_any().unbind(),
    })
}

/// A parsed run configuration.
#[pyclass(name = "Config", frozen)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: parse_config(text).map_err(err)?,
        })
    }

    /// Parameter counts: one entry per layer, the head, and the totals.
    fn count_params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = count_params(&self.inner.layers, Some(&self.inner.head));
        let d = PyDict::new(py);
        let layers: Vec<(String, u64)> = c
            .layers
            .iter()
            .map(|(spec, n)| (spec.family().to_owned(), n.total()))
            .collect();
        d.set_item("layers", layers)?;
        d.set_item("head", c.head.map(|h| h.total()))?;
        d.set_item("hidden", c.hidden().total())?;
        d.set_item("total", c.total().total())?;
        Ok(d)
    }

    /// Generates the `train`, `cv` or `test` split.
    fn dataset(&self, split: &str) -> PyResult<Dataset> {
        let split: Split = split.parse().map_err(err)?;
        Ok(Dataset {
            inner: self.inner.dataset(split).map_err(err)?,
        })
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// A list of input/target sequences.
#[pyclass(frozen)]
struct Dataset {
    inner: SequenceDataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.sequences.len()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance.clone()
    }

    /// `(inputs, targets)` of sequence `i`; inputs are rows of floats, each
    /// target is `None`, a class index or a list of floats.
    fn sequence(&self, py: Python<'_>, i: usize) -> PyResult<(Vec<Vec<f64>>, Vec<PyObject>)> {
        let seq = self
            .inner
            .sequences
            .get(i)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))?;
        let inputs = (0..seq.len()).map(|t| seq.inputs.row(t).to_vec()).collect();
        let targets = seq.targets.iter().map(|t| target_to_py(py, t)).collect::<PyResult<_>>()?;
        Ok((inputs, targets))
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path)?;
        tasks::write_csv(&self.inner, std::io::BufWriter::new(file))?;
        Ok(())
    }
}

#[pyfunction]
fn gen_adding(n: usize, length: usize, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset {
        inner: tasks::gen_adding(n, length, seed).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (frames, dim, classes, seed, seq_len=100, noise=1.0, persistence=0.8, means_seed=None))]
#[allow(clippy::too_many_arguments)]
fn gen_frames(
    frames: usize,
    dim: usize,
    classes: usize,
    seed: u64,
    seq_len: usize,
    noise: f64,
    persistence: f64,
    means_seed: Option<u64>,
) -> PyResult<Dataset> {
    let task = FrameTask {
        frames,
        dim,
        classes,
        seq_len,
        noise,
        persistence,
    };
    Ok(Dataset {
        inner: tasks::gen_frame_classification(&task, seed, means_seed.unwrap_or(seed)).map_err(err)?,
    })
}

#[pyfunction]
fn spearman_rho(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    if x.len() != y.len() {
        return Err(pyo3::exceptions::PyValueError::new_err("length mismatch"));
    }
    Ok(spearman(&x, &y))
}

/// Model plus optimizer and scheduler state for one configured run.
#[pyclass]
struct Trainer {
    config: RunConfig,
    state: TrainState,
}

#[pymethods]
impl Trainer {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let config = config.inner.clone();
        let model = config.build_model().map_err(err)?;
        let state = TrainState::new(model, &config.train);
        Ok(Trainer { config, state })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = load_checkpoint(&path).map_err(err)?;
        let config = parse_config(&ckpt.config_text).map_err(err)?;
        let template = stu_core::Model::new(&config.layers, config.head).map_err(err)?;
        let state = ckpt.restore(template, &config.train).map_err(err)?;
        Ok(Trainer { config, state })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.state, &self.config.to_string()).map_err(err)
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig {
            inner: self.config.clone(),
        }
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.state.epoch
    }

    #[getter]
    fn lr(&self) -> f64 {
        self.state.scheduler.lr()
    }

    #[getter]
    fn finished(&self) -> bool {
        self.state.finished(&self.config.train)
    }

    /// `(epoch, train_loss, cv_loss, cv_metric, lr)` per completed epoch.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        self.state
            .history
            .iter()
            .map(|r| (r.epoch, r.train_loss, r.cv_loss, r.cv_metric, r.lr))
            .collect()
    }

    /// Runs one epoch and returns its record as a dict.
    fn run_epoch<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let train = self.config.dataset(Split::Train).map_err(err)?;
        let cv = self.config.dataset(Split::Cv).map_err(err)?;
        let chunks = make_chunks(&train, self.config.train.unfold_steps);
        let (state, config, wall) = (&mut self.state, &self.config.train, self.config.wall_clock);
        let r = py
            .allow_threads(|| run_epoch(state, config, &chunks, &cv, wall))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("epoch", r.epoch)?;
        d.set_item("train_loss", r.train_loss)?;
        d.set_item("cv_loss", r.cv_loss)?;
        d.set_item("cv_metric", r.cv_metric)?;
        d.set_item("lr", r.lr)?;
        Ok(d)
    }

    /// Loss and task metric on a split of the configured task.
    fn evaluate<'py>(&self, py: Python<'py>, split: &str) -> PyResult<Bound<'py, PyDict>> {
        let split: Split = split.parse().map_err(err)?;
        let data = self.config.dataset(split).map_err(err)?;
        let m = tasks::evaluate(&self.state.model, &data, Some(self.config.train.unfold_steps)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("loss", m.loss)?;
        d.set_item("accuracy", m.accuracy)?;
        d.set_item("mse", m.mse)?;
        d.set_item("frames", m.frames)?;
        Ok(d)
    }

    /// Largest relative error between analytic and central-difference
    /// gradients over the first `chunks` training chunks.
    #[pyo3(signature = (eps=1e-5, chunks=2, max_coords=64))]
    fn grad_check(&self, eps: f64, chunks: usize, max_coords: usize) -> PyResult<f64> {
        let data = self.config.dataset(Split::Train).map_err(err)?;
        let mut batch = make_chunks(&data, self.config.train.unfold_steps);
        batch.truncate(chunks.max(1));
        let opts = GradCheckOptions {
            max_coords,
            seed: self.config.train.seed,
        };
        let report = finite_diff_check(&self.state.model, &batch, eps, opts).map_err(err)?;
        Ok(report.max_rel())
    }

    fn param_names(&self) -> Vec<String> {
        self.state.model.param_infos().into_iter().map(|i| i.name).collect()
    }

    /// Flattened row-major values of one parameter tensor.
    fn param(&self, name: &str) -> PyResult<Vec<f64>> {
        let infos = self.state.model.param_infos();
        infos
            .iter()
            .zip(self.state.model.tensors())
            .find(|(i, _)| i.name == name)
            .map(|(_, t)| t.as_slice().to_vec())
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(name.to_owned()))
    }

    /// `(unit, input_gate, forget_gate, candidate)` rows of a semi-tied
    /// LSTM layer, sorted by decreasing input gate.
    #[pyo3(signature = (layer=None))]
    fn gate_profile(&self, layer: Option<usize>) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        let layers = &self.state.model.layers;
        let index = match layer {
            Some(i) => i,
            None => layers
                .iter()
                .position(|l| matches!(l, Layer::Lstm(p) if matches!(p.variant(), LstmVariant::SemiTied(_))))
                .ok_or_else(|| StuError::new_err("model has no semi-tied LSTM layer"))?,
        };
        let Some(Layer::Lstm(p)) = layers.get(index) else {
            return Err(StuError::new_err(format!("layer {index} is not an LSTM layer")));
        };
        let rows = gate_profile(p).map_err(err)?;
        Ok(rows
            .iter()
            .map(|r| (r.unit, r.input_gate, r.forget_gate, r.candidate))
            .collect())
    }
}

#[pymodule]
fn semitied(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StuError", m.py().get_type::<StuError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Trainer>()?;
    m.add_function(wrap_pyfunction!(gen_adding, m)?)?;
    m.add_function(wrap_pyfunction!(gen_frames, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    Ok(())
}
