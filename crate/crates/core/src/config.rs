//! Run configuration: a flat `key=value` file with `[layer]` and `[head]`
//! sections.
//!
//! ```text
//! # adding problem, one semi-tied LSTM layer
//! task=adding
//! task.length=50
//! seed=3
//! learning_rate=0.5
//!
//! [layer]
//! family=stu_lstm
//! hidden=32
//!
//! [head]
//! kind=linear
//! ```
//!
//! Top-level keys must precede the first section. Layers are stacked in
//! file order; a layer's `input` defaults to the width below it. The head
//! section is optional and defaults to a linear head for regression tasks
//! and a softmax head for classification tasks.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{CandidateKind, CarryMode, HeadKind, HeadSpec, LayerSpec, LstmVariant, StuFlags};
use crate::model::Model;
use crate::rng::Rng;
use crate::tasks::{gen_adding, gen_frame_classification, FrameTask, SequenceDataset};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskConfig {
    Adding {
        train_n: usize,
        cv_n: usize,
        test_n: usize,
        length: usize,
    },
    Frames {
        /// Geometry of every split; `frames` is the training size.
        task: FrameTask,
        cv_frames: usize,
        test_frames: usize,
    },
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Adding { .. } => "adding",
            TaskConfig::Frames { .. } => "frames",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TaskConfig::Adding { .. } => 2,
            TaskConfig::Frames { task, .. } => task.dim,
        }
    }

    pub fn default_head(&self, input: usize) -> HeadSpec {
        match self {
            TaskConfig::Adding { .. } => HeadSpec {
                input,
                output: 1,
                kind: HeadKind::Linear,
            },
            TaskConfig::Frames { task, .. } => HeadSpec {
                input,
                output: task.classes,
                kind: HeadKind::Softmax,
            },
        }
    }

    fn defaults(name: &str) -> Option<TaskConfig> {
        match name {
            "adding" => Some(TaskConfig::Adding {
                train_n: 10_000,
                cv_n: 1_000,
                test_n: 1_000,
                length: 50,
            }),
            "frames" => Some(TaskConfig::Frames {
                task: FrameTask::default(),
                cv_frames: 2_000,
                test_frames: 2_000,
            }),
            _ => None,
        }
    }
}

/// Data split selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Cv,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "cv" => Ok(Split::Cv),
            "test" => Ok(Split::Test),
            _ => Err(Error::Usage(format!("unknown split '{s}' (train, cv or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskConfig,
    /// Seeds the data; splits use `data_seed`, `+1` and `+2`.
    pub data_seed: u64,
    pub train: TrainConfig,
    pub layers: Vec<LayerSpec>,
    pub head: HeadSpec,
    pub out_dir: Option<PathBuf>,
    /// Record real epoch durations in the metrics log. Off by default so
    /// that logs are reproducible byte for byte.
    pub wall_clock: bool,
}

impl RunConfig {
    pub fn dataset(&self, split: Split) -> Result<SequenceDataset> {
        let offset = match split {
            Split::Train => 0,
            Split::Cv => 1,
            Split::Test => 2,
        };
        let seed = self.data_seed.wrapping_add(offset);
        match self.task {
            TaskConfig::Adding {
                train_n,
                cv_n,
                test_n,
                length,
            } => {
                let n = [train_n, cv_n, test_n][offset as usize];
                gen_adding(n, length, seed)
            }
            TaskConfig::Frames {
                task,
                cv_frames,
                test_frames,
            } => {
                let frames = [task.frames, cv_frames, test_frames][offset as usize];
                gen_frame_classification(&FrameTask { frames, ..task }, seed, self.data_seed)
            }
        }
    }

    /// Freshly initialized model, seeded by `seed`.
    pub fn build_model(&self) -> Result<Model> {
        let mut rng = Rng::new(self.train.seed);
        let mut model = Model::init(&self.layers, self.head, self.train.init_scale, &mut rng)?;
        model.set_forget_bias(self.train.forget_bias);
        Ok(model)
    }
}

fn kind_name(k: HeadKind) -> &'static str {
    match k {
        HeadKind::Softmax => "softmax",
        HeadKind::Linear => "linear",
    }
}

fn act_name(a: CandidateKind) -> &'static str {
    match a {
        CandidateKind::Sigmoid => "sigmoid",
        CandidateKind::Relu => "relu",
    }
}

fn carry_name(c: CarryMode) -> &'static str {
    match c {
        CarryMode::Independent => "independent",
        CarryMode::Coupled => "coupled",
    }
}

/// Normalized form: every key explicit, one canonical order. Parsing it
/// yields the same configuration.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task={}", self.task.name())?;
        match self.task {
            TaskConfig::Adding {
                train_n,
                cv_n,
                test_n,
                length,
            } => {
                writeln!(f, "task.train_n={train_n}")?;
                writeln!(f, "task.cv_n={cv_n}")?;
                writeln!(f, "task.test_n={test_n}")?;
                writeln!(f, "task.length={length}")?;
            }
            TaskConfig::Frames {
                task,
                cv_frames,
                test_frames,
            } => {
                writeln!(f, "task.frames={}", task.frames)?;
                writeln!(f, "task.cv_frames={cv_frames}")?;
                writeln!(f, "task.test_frames={test_frames}")?;
                writeln!(f, "task.dim={}", task.dim)?;
                writeln!(f, "task.classes={}", task.classes)?;
                writeln!(f, "task.seq_len={}", task.seq_len)?;
                writeln!(f, "task.noise={}", task.noise)?;
                writeln!(f, "task.persistence={}", task.persistence)?;
            }
        }
        let t = &self.train;
        writeln!(f, "data_seed={}", self.data_seed)?;
        writeln!(f, "seed={}", t.seed)?;
        writeln!(f, "unfold_steps={}", t.unfold_steps)?;
        writeln!(f, "minibatch={}", t.minibatch)?;
        writeln!(f, "learning_rate={}", t.learning_rate)?;
        writeln!(f, "weight_decay={}", t.weight_decay)?;
        writeln!(f, "momentum={}", t.momentum)?;
        writeln!(f, "max_epochs={}", t.max_epochs)?;
        writeln!(f, "ramp_threshold={}", t.ramp_threshold)?;
        writeln!(f, "stop_threshold={}", t.stop_threshold)?;
        writeln!(f, "init_scale={}", t.init_scale)?;
        writeln!(f, "forget_bias={}", t.forget_bias)?;
        if let Some(dir) = &self.out_dir {
            writeln!(f, "out_dir={}", dir.display())?;
        }
        writeln!(f, "wall_clock={}", self.wall_clock)?;
        for layer in &self.layers {
            writeln!(f, "\n[layer]")?;
            writeln!(f, "family={}", layer.family())?;
            match *layer {
                LayerSpec::Lstm { input, hidden, variant } => {
                    writeln!(f, "input={input}")?;
                    writeln!(f, "hidden={hidden}")?;
                    match variant {
                        LstmVariant::Standard => {}
                        LstmVariant::Projected { proj } => writeln!(f, "projection={proj}")?,
                        LstmVariant::SemiTied(flags) => {
                            writeln!(f, "untie_v={}", flags.untie_v)?;
                            writeln!(f, "untie_b={}", flags.untie_b)?;
                            writeln!(f, "frozen_eta={}", flags.frozen_eta)?;
                        }
                    }
                }
                LayerSpec::Dense {
                    input,
                    output,
                    activation,
                } => {
                    writeln!(f, "input={input}")?;
                    writeln!(f, "output={output}")?;
                    writeln!(f, "activation={}", act_name(activation))?;
                }
                LayerSpec::Highway { dim, activation, carry } | LayerSpec::StuHighway { dim, activation, carry } => {
                    writeln!(f, "input={dim}")?;
                    writeln!(f, "activation={}", act_name(activation))?;
                    writeln!(f, "carry={}", carry_name(carry))?;
                }
            }
        }
        writeln!(f, "\n[head]")?;
        writeln!(f, "kind={}", kind_name(self.head.kind))?;
        writeln!(f, "input={}", self.head.input)?;
        write!(f, "output={}", self.head.output)?;
        writeln!(f)
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Key/value pairs of one block, with the line of each key.
struct Block {
    /// Line of the section header, 0 for the top level.
    line: usize,
    entries: HashMap<String, Entry>,
    order: Vec<String>,
}

impl Block {
    fn new(line: usize) -> Self {
        Block {
            line,
            entries: HashMap::new(),
            order: Vec::new(),
        }
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| config_err(e.line, format!("{key}: expected {what}, got '{}'", e.value))),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<(usize, usize)>> {
        self.parse(key, "a non-negative integer")
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        Ok(self.parse(key, "a non-negative integer")?.map(|v| v.0))
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        Ok(self.parse(key, "a real number")?.map(|v| v.0))
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        Ok(self.parse(key, "true or false")?.map(|v| v.0))
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => options
                .iter()
                .find(|(n, _)| *n == e.value)
                .map(|(_, v)| Some(*v))
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    config_err(e.line, format!("{key}: expected one of {}, got '{}'", names.join(", "), e.value))
                }),
        }
    }

    /// Fails on the first key nobody consumed, in file order.
    fn finish(self, context: &str) -> Result<()> {
        for key in &self.order {
            if let Some(e) = self.entries.get(key) {
                return Err(config_err(e.line, format!("unknown key '{key}' {context}")));
            }
        }
        Ok(())
    }
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

enum Section {
    Layer(Block),
    Head(Block),
}

fn split_blocks(text: &str) -> Result<(Block, Vec<Section>)> {
    let mut top = Block::new(0);
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            match content {
                "[layer]" => sections.push(Section::Layer(Block::new(line))),
                "[head]" => {
                    if sections.iter().any(|s| matches!(s, Section::Head(_))) {
                        return Err(config_err(line, "only one [head] section is allowed"));
                    }
                    sections.push(Section::Head(Block::new(line)))
                }
                other => return Err(config_err(line, format!("unknown section {other}"))),
            }
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("expected key=value, got '{content}'")))?;
        let (key, value) = (key.trim().to_owned(), value.trim().to_owned());
        if key.is_empty() {
            return Err(config_err(line, "empty key"));
        }
        let block = match sections.last_mut() {
            None => &mut top,
            Some(Section::Layer(b)) | Some(Section::Head(b)) => b,
        };
        if let Some(prev) = block.entries.get(&key) {
            return Err(config_err(line, format!("duplicate key '{key}' (first set on line {})", prev.line)));
        }
        block.order.push(key.clone());
        block.entries.insert(key, Entry { value, line });
    }
    Ok((top, sections))
}

fn parse_task(top: &mut Block) -> Result<TaskConfig> {
    let (name, line) = match top.take("task") {
        Some(e) => (e.value, e.line),
        None => return Err(config_err(0, "missing required key 'task'")),
    };
    let mut task = TaskConfig::defaults(&name)
        .ok_or_else(|| config_err(line, format!("task: expected adding or frames, got '{name}'")))?;
    match &mut task {
        TaskConfig::Adding {
            train_n,
            cv_n,
            test_n,
            length,
        } => {
            if let Some((v, _)) = top.usize("task.train_n")? {
                *train_n = v;
            }
            if let Some((v, _)) = top.usize("task.cv_n")? {
                *cv_n = v;
            }
            if let Some((v, _)) = top.usize("task.test_n")? {
                *test_n = v;
            }
            if let Some((v, l)) = top.usize("task.length")? {
                if v < 2 {
                    return Err(config_err(l, "task.length must be at least 2"));
                }
                *length = v;
            }
        }
        TaskConfig::Frames {
            task,
            cv_frames,
            test_frames,
        } => {
            if let Some((v, _)) = top.usize("task.frames")? {
                task.frames = v;
            }
            if let Some((v, _)) = top.usize("task.cv_frames")? {
                *cv_frames = v;
            }
            if let Some((v, _)) = top.usize("task.test_frames")? {
                *test_frames = v;
            }
            if let Some((v, l)) = top.usize("task.dim")? {
                if v == 0 {
                    return Err(config_err(l, "task.dim must be positive"));
                }
                task.dim = v;
            }
            if let Some((v, l)) = top.usize("task.classes")? {
                if v < 2 {
                    return Err(config_err(l, "task.classes must be at least 2"));
                }
                task.classes = v;
            }
            if let Some((v, l)) = top.usize("task.seq_len")? {
                if v == 0 {
                    return Err(config_err(l, "task.seq_len must be positive"));
                }
                task.seq_len = v;
            }
            if let Some(v) = top.f64("task.noise")? {
                task.noise = v;
            }
            if let Some(v) = top.f64("task.persistence")? {
                task.persistence = v;
            }
            if !(task.noise >= 0.0 && task.noise.is_finite()) {
                return Err(config_err(line, "task.noise must be finite and non-negative"));
            }
            if !(0.0..=1.0).contains(&task.persistence) {
                return Err(config_err(line, "task.persistence must lie in [0, 1]"));
            }
        }
    }
    Ok(task)
}

const ACTIVATIONS: [(&str, CandidateKind); 2] = [("sigmoid", CandidateKind::Sigmoid), ("relu", CandidateKind::Relu)];
const CARRIES: [(&str, CarryMode); 2] = [("independent", CarryMode::Independent), ("coupled", CarryMode::Coupled)];

/// Parses one `[layer]` block; `below` is the width feeding it.
fn parse_layer(mut b: Block, below: usize) -> Result<(LayerSpec, Option<usize>)> {
    let header = b.line;
    let family = b
        .take("family")
        .ok_or_else(|| config_err(header, "layer is missing 'family'"))?;
    let input = b.usize("input")?;
    let input_line = input.map(|v| v.1);
    let input = input.map_or(below, |v| v.0);
    let positive = |v: Option<(usize, usize)>, key: &str| -> Result<usize> {
        match v {
            Some((0, l)) => Err(config_err(l, format!("{key} must be positive"))),
            Some((v, _)) => Ok(v),
            None => Err(config_err(header, format!("layer is missing '{key}'"))),
        }
    };
    let spec = match family.value.as_str() {
        "lstm" | "lstmp" | "stu_lstm" => {
            let hidden = positive(b.usize("hidden")?, "hidden")?;
            let variant = match family.value.as_str() {
                "lstm" => LstmVariant::Standard,
                "lstmp" => LstmVariant::Projected {
                    proj: positive(b.usize("projection")?, "projection")?,
                },
                _ => LstmVariant::SemiTied(StuFlags {
                    untie_v: b.bool("untie_v")?.unwrap_or(false),
                    untie_b: b.bool("untie_b")?.unwrap_or(false),
                    frozen_eta: b.bool("frozen_eta")?.unwrap_or(false),
                }),
            };
            LayerSpec::Lstm { input, hidden, variant }
        }
        "dense" => LayerSpec::Dense {
            input,
            output: positive(b.usize("output")?, "output")?,
            activation: b.choice("activation", &ACTIVATIONS)?.unwrap_or(CandidateKind::Sigmoid),
        },
        "highway" | "stu_highway" => {
            let activation = b.choice("activation", &ACTIVATIONS)?.unwrap_or(CandidateKind::Sigmoid);
            let carry = b.choice("carry", &CARRIES)?.unwrap_or_default();
            if family.value == "highway" {
                LayerSpec::Highway {
                    dim: input,
                    activation,
                    carry,
                }
            } else {
                LayerSpec::StuHighway {
                    dim: input,
                    activation,
                    carry,
                }
            }
        }
        other => {
            return Err(config_err(
                family.line,
                format!("family: expected lstm, lstmp, stu_lstm, dense, highway or stu_highway, got '{other}'"),
            ))
        }
    };
    b.finish(&format!("for a {} layer", family.value))?;
    Ok((spec, input_line))
}

fn describe(k: usize, spec: &LayerSpec) -> String {
    format!("layer {} ({}, {}->{})", k + 1, spec.family(), spec.input_dim(), spec.output_dim())
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let (mut top, sections) = split_blocks(text)?;
    let task = parse_task(&mut top)?;

    let mut train = TrainConfig::default();
    let mut lines: HashMap<&str, usize> = HashMap::new();
    for key in [
        "seed",
        "unfold_steps",
        "minibatch",
        "learning_rate",
        "weight_decay",
        "momentum",
        "max_epochs",
        "ramp_threshold",
        "stop_threshold",
        "init_scale",
        "forget_bias",
    ] {
        if let Some(e) = top.entries.get(key) {
            lines.insert(key, e.line);
        }
    }
    if let Some(v) = top.u64("seed")? {
        train.seed = v;
    }
    let data_seed = top.u64("data_seed")?.unwrap_or(train.seed);
    if let Some((v, _)) = top.usize("unfold_steps")? {
        train.unfold_steps = v;
    }
    if let Some((v, _)) = top.usize("minibatch")? {
        train.minibatch = v;
    }
    if let Some(v) = top.f64("learning_rate")? {
        train.learning_rate = v;
    }
    if let Some(v) = top.f64("weight_decay")? {
        train.weight_decay = v;
    }
    if let Some(v) = top.f64("momentum")? {
        train.momentum = v;
    }
    if let Some((v, _)) = top.usize("max_epochs")? {
        train.max_epochs = v;
    }
    if let Some(v) = top.f64("ramp_threshold")? {
        train.ramp_threshold = v;
    }
    if let Some(v) = top.f64("stop_threshold")? {
        train.stop_threshold = v;
    }
    if let Some(v) = top.f64("init_scale")? {
        train.init_scale = v;
    }
    if let Some(v) = top.f64("forget_bias")? {
        train.forget_bias = v;
    }
    if let Err(e) = train.validate() {
        let msg = e.to_string();
        let field = msg.split_whitespace().next().unwrap_or("");
        return Err(config_err(lines.get(field).copied().unwrap_or(0), msg));
    }
    let out_dir = top.take("out_dir").map(|e| PathBuf::from(e.value));
    let wall_clock = top.bool("wall_clock")?.unwrap_or(false);
    top.finish("at top level")?;

    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut head_block = None;
    let mut width = task.input_dim();
    for section in sections {
        match section {
            Section::Layer(b) => {
                let header = b.line;
                let (spec, input_line) = parse_layer(b, width)?;
                if spec.input_dim() != width {
                    let line = input_line.unwrap_or(header);
                    let below = match layers.last() {
                        Some(prev) => describe(layers.len() - 1, prev),
                        None => format!("the task's {width}-dim input"),
                    };
                    return Err(config_err(
                        line,
                        format!(
                            "dimension chain broken: {below} emits {width} values but {} expects {}",
                            describe(layers.len(), &spec),
                            spec.input_dim()
                        ),
                    ));
                }
                width = spec.output_dim();
                layers.push(spec);
            }
            Section::Head(b) => head_block = Some(b),
        }
    }

    if train.forget_bias != 0.0 {
        let shared = layers.iter().position(|l| {
            matches!(l, LayerSpec::Lstm { variant: LstmVariant::SemiTied(f), .. } if !f.untie_b)
        });
        if let Some(k) = shared {
            return Err(config_err(
                lines.get("forget_bias").copied().unwrap_or(0),
                format!("forget_bias needs a separate forget-gate bias, but layer {} (stu_lstm) shares one bias across its units; set untie_b=true", k + 1),
            ));
        }
    }

    let mut head = task.default_head(width);
    if let Some(mut b) = head_block {
        if let Some(kind) = b.choice("kind", &[("softmax", HeadKind::Softmax), ("linear", HeadKind::Linear)])? {
            head.kind = kind;
        }
        if let Some((v, l)) = b.usize("input")? {
            if v != width {
                let below = match layers.last() {
                    Some(prev) => describe(layers.len() - 1, prev),
                    None => format!("the task's {width}-dim input"),
                };
                return Err(config_err(
                    l,
                    format!("dimension chain broken: {below} emits {width} values but the head expects {v}"),
                ));
            }
        }
        if let Some((v, l)) = b.usize("output")? {
            if v == 0 {
                return Err(config_err(l, "output must be positive"));
            }
            head.output = v;
        }
        let line = b.line;
        b.finish("in [head]")?;
        match (task, head.kind) {
            (TaskConfig::Frames { task, .. }, HeadKind::Softmax) if head.output != task.classes => {
                return Err(config_err(line, format!("softmax head needs {} outputs, one per class", task.classes)));
            }
            (TaskConfig::Frames { .. }, HeadKind::Linear) => {
                return Err(config_err(line, "classification tasks need a softmax head"));
            }
            (TaskConfig::Adding { .. }, HeadKind::Softmax) => {
                return Err(config_err(line, "the adding problem needs a linear head"));
            }
            (TaskConfig::Adding { .. }, HeadKind::Linear) if head.output != 1 => {
                return Err(config_err(line, "the adding problem has one output"));
            }
            _ => {}
        }
    }

    Ok(RunConfig {
        task,
        data_seed,
        train,
        layers,
        head,
        out_dir,
        wall_clock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "task=adding\n[layer]\nfamily=stu_lstm\nhidden=8\n";

    #[test]
    fn minimal_config_parses_and_echoes() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.layers.len(), 1);
        assert_eq!(c.head.kind, HeadKind::Linear);
        assert_eq!(c.head.input, 8);
        let echoed = c.to_string();
        assert_eq!(parse_config(&echoed).unwrap(), c);
        assert_eq!(parse_config(&echoed).unwrap().to_string(), echoed);
    }

    #[test]
    fn every_family_roundtrips() {
        let text = "\
task=frames
task.dim=6
task.classes=3
learning_rate=0.25
out_dir=/tmp/x
[layer]
family=lstmp
hidden=5
projection=4
[layer]
family=stu_lstm
hidden=4
untie_v=true
frozen_eta=true
[layer]
family=stu_highway
activation=relu
carry=coupled
[layer]
family=highway
[layer]
family=dense
output=3
activation=relu
[layer]
family=lstm
hidden=2
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.layers.len(), 6);
        assert_eq!(c.head.output, 3);
        assert_eq!(parse_config(&c.to_string()).unwrap(), c);
        c.build_model().unwrap();
    }

    #[test]
    fn forget_bias_sets_only_separate_forget_biases() {
        let text = "task=adding\nforget_bias=1.5\n[layer]\nfamily=lstm\nhidden=3\n[layer]\nfamily=stu_lstm\nhidden=2\nuntie_b=true\n";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&c.to_string()).unwrap(), c);
        let m = c.build_model().unwrap();
        for (info, t) in m.param_infos().iter().zip(m.tensors()) {
            let want = if info.name.ends_with(".b_f") { 1.5 } else { 0.0 };
            if info.name.contains(".b") {
                assert!(t.as_slice().iter().all(|&v| v == want), "{}", info.name);
            }
        }

        let e = parse_config("task=adding\nforget_bias=1\n[layer]\nfamily=stu_lstm\nhidden=2\n").unwrap_err();
        let Error::Config { line, message } = &e else { panic!("{e}") };
        assert_eq!(*line, 2);
        assert!(message.contains("untie_b"), "{message}");
    }

    #[test]
    fn zero_unfold_names_field_and_line() {
        let e = parse_config("task=adding\nunfold_steps=0\n").unwrap_err();
        let Error::Config { line, message } = &e else { panic!("{e}") };
        assert_eq!(*line, 2);
        assert!(message.contains("unfold_steps"), "{message}");
    }

    #[test]
    fn broken_chain_names_both_layers() {
        let text = "\
task=frames
task.dim=80
[layer]
family=lstm
input=80
hidden=500
[layer]
family=dense
input=300
output=4
";
        let e = parse_config(text).unwrap_err();
        let Error::Config { line, message } = &e else { panic!("{e}") };
        assert_eq!(*line, 9);
        assert!(message.contains("layer 1 (lstm, 80->500)"), "{message}");
        assert!(message.contains("layer 2 (dense, 300->4)"), "{message}");
    }

    #[test]
    fn unknown_and_mistyped_keys_report_lines() {
        let e = parse_config("task=adding\nlearnig_rate=0.1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = parse_config("task=adding\nseed=abc\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = parse_config("task=adding\n[layer]\nfamily=lstm\nhidden=4\nprojection=2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 5, .. }), "{e}");
        let e = parse_config("task=adding\n[layer]\nfamily=gru\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        let e = parse_config("task=adding\n[model]\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = parse_config("task=adding\nseed=1\nseed=2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        assert_eq!(parse_config("seed=1\n").unwrap_err().kind(), "config");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = parse_config("# header\n\ntask=adding   # trailing\n  seed = 4 \n").unwrap();
        assert_eq!(c.train.seed, 4);
        assert_eq!(c.data_seed, 4);
        assert!(c.layers.is_empty());
        assert_eq!(c.head.input, 2);
    }

    #[test]
    fn head_must_fit_the_task() {
        assert!(parse_config("task=adding\n[head]\nkind=softmax\noutput=2\n").is_err());
        assert!(parse_config("task=frames\ntask.classes=3\n[head]\noutput=4\n").is_err());
        assert!(parse_config("task=adding\n[head]\ninput=3\n").is_err());
    }

    #[test]
    fn splits_use_distinct_seeds() {
        let c = parse_config("task=adding\ntask.train_n=3\ntask.cv_n=3\ntask.length=5\n").unwrap();
        let a = c.dataset(Split::Train).unwrap();
        let b = c.dataset(Split::Cv).unwrap();
        assert_ne!(a.sequences, b.sequences);
        assert_eq!(a, c.dataset(Split::Train).unwrap());
    }
}
