//! The `stu` command line.
//!
//! Every failure ends in a single stderr line `error: <kind>: <message>`
//! and a nonzero exit status.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_config, RunConfig, Split};
use crate::error::{Error, Result};
use crate::layers::{count_params, gate_profile, spearman, Layer, LayerSpec, LstmVariant};
use crate::model::Model;
use crate::tasks::{evaluate, gen_adding, gen_frame_classification, write_csv, FrameTask, SequenceDataset};
use crate::training::{
    finite_diff_check, load_checkpoint, make_chunks, run_epoch, save_checkpoint, EpochRecord, GradCheckOptions,
    TrainState,
};

pub const METRICS_HEADER: &str = "epoch,train_loss,cv_loss,lr,seconds";
pub const PROFILE_HEADER: &str = "unit,input_gate,forget_gate,candidate";

#[derive(Debug, Parser)]
#[command(name = "stu", version, about = "Semi-tied LSTM and highway layers: training and inspection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes resolved.cfg, metrics.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Score a checkpoint on a split (train, cv, test) or an inline task.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        task: String,
    },
    /// Compare analytic gradients with central differences.
    GradCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Fails when the worst relative error reaches this value.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Training chunks in the checked batch.
        #[arg(long, default_value_t = 2)]
        chunks: usize,
        /// Coordinates checked per tensor.
        #[arg(long, default_value_t = 64)]
        max_coords: usize,
    },
    /// Itemized trainable-parameter count of the configured stack.
    CountParams {
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-unit resting gate values of a semi-tied LSTM layer.
    GateProfile {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV; defaults to profile.csv next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Layer index (0-based); defaults to the first semi-tied LSTM.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Write a dataset as CSV.
    GenData {
        /// Inline spec such as `adding:n=100,length=50,seed=1`, or a split
        /// name together with --config.
        #[arg(long)]
        task: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&read_text(path)?)
}

/// Thousands-separated integer, e.g. `295,000`.
pub fn group_digits(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Parses `adding:n=..,length=..,seed=..` or
/// `frames:frames=..,dim=..,classes=..,seq_len=..,noise=..,persistence=..,seed=..`.
pub fn inline_task(spec: &str) -> Result<SequenceDataset> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut pairs = Vec::new();
    for item in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("task parameter '{item}' is not key=value")))?;
        pairs.push((k.trim(), v.trim()));
    }
    let mut get = |key: &str| pairs.iter().position(|(k, _)| *k == key).map(|i| pairs.remove(i).1);
    fn num<T: std::str::FromStr>(key: &str, v: Option<&str>, default: T) -> Result<T> {
        match v {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Usage(format!("task parameter {key}: cannot parse '{v}'"))),
        }
    }
    let data = match name {
        "adding" => {
            let n = num("n", get("n"), 1000usize)?;
            let length = num("length", get("length"), 50usize)?;
            let seed = num("seed", get("seed"), 0u64)?;
            gen_adding(n, length, seed)?
        }
        "frames" => {
            let d = FrameTask::default();
            let task = FrameTask {
                frames: num("frames", get("frames"), d.frames)?,
                dim: num("dim", get("dim"), d.dim)?,
                classes: num("classes", get("classes"), d.classes)?,
                seq_len: num("seq_len", get("seq_len"), d.seq_len)?,
                noise: num("noise", get("noise"), d.noise)?,
                persistence: num("persistence", get("persistence"), d.persistence)?,
            };
            let seed = num("seed", get("seed"), 0u64)?;
            let means_seed = num("means_seed", get("means_seed"), seed)?;
            gen_frame_classification(&task, seed, means_seed)?
        }
        other => return Err(Error::Usage(format!("unknown task '{other}' (adding or frames)"))),
    };
    if let Some((k, _)) = pairs.first() {
        return Err(Error::Usage(format!("unknown task parameter '{k}' for {name}")));
    }
    Ok(data)
}

fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in history {
        s.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.train_loss, r.cv_loss, r.lr, r.seconds));
    }
    s
}

/// Rebuilds the run configuration and model stored in a checkpoint.
pub fn open_checkpoint(path: &Path) -> Result<(RunConfig, TrainState)> {
    let ckpt = load_checkpoint(path)?;
    let config = parse_config(&ckpt.config_text)?;
    let state = ckpt.restore(Model::new(&config.layers, config.head)?, &config.train)?;
    Ok((config, state))
}

fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    let strip = |c: &RunConfig| RunConfig {
        out_dir: None,
        wall_clock: false,
        ..c.clone()
    };
    strip(a) == strip(b)
}

fn train(config_path: &Path, resume: Option<&Path>, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let config = load_config(config_path)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::Usage("no output directory: set out_dir in the config or pass --out-dir".into()))?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let resolved = config.to_string();
    write_text(&dir.join("resolved.cfg"), &resolved)?;

    let mut state = match resume {
        Some(path) => {
            let (stored, state) = open_checkpoint(path)?;
            if !same_run(&stored, &config) {
                return Err(Error::Usage(format!(
                    "{} was trained under a different configuration",
                    path.display()
                )));
            }
            state
        }
        None => TrainState::new(config.build_model()?, &config.train),
    };

    let train_data = config.dataset(Split::Train)?;
    let cv = config.dataset(Split::Cv)?;
    let chunks = make_chunks(&train_data, config.train.unfold_steps);
    let metrics_path = dir.join("metrics.csv");
    write_text(&metrics_path, &metrics_csv(&state.history))?;

    while !state.finished(&config.train) {
        let r = run_epoch(&mut state, &config.train, &chunks, &cv, config.wall_clock)?;
        save_checkpoint(&dir.join(format!("epoch{:03}.ckpt", r.epoch)), &state, &resolved)?;
        write_text(&metrics_path, &metrics_csv(&state.history))?;
        writeln!(
            out,
            "epoch {} train_loss={} cv_loss={} cv_metric={} lr={}",
            r.epoch, r.train_loss, r.cv_loss, r.cv_metric, r.lr
        )
        .map_err(out_err)?;
    }
    let final_path = dir.join("final.ckpt");
    save_checkpoint(&final_path, &state, &resolved)?;
    writeln!(out, "wrote {}", final_path.display()).map_err(out_err)?;
    Ok(())
}

fn eval(checkpoint: &Path, task: &str, out: &mut dyn Write) -> Result<()> {
    let (config, state) = open_checkpoint(checkpoint)?;
    let data = match task.parse::<Split>() {
        Ok(split) => config.dataset(split)?,
        Err(_) => inline_task(task)?,
    };
    let m = evaluate(&state.model, &data, Some(config.train.unfold_steps))?;
    let metric = match (m.accuracy, m.mse) {
        (Some(a), _) => format!("accuracy={a}"),
        (_, Some(e)) => format!("mse={e}"),
        _ => String::new(),
    };
    writeln!(out, "loss={} {metric} frames={}", m.loss, m.frames).map_err(out_err)
}

fn grad_check(config_path: &Path, eps: f64, tol: f64, chunks: usize, max_coords: usize, out: &mut dyn Write) -> Result<()> {
    let config = load_config(config_path)?;
    let model = config.build_model()?;
    let data = config.dataset(Split::Train)?;
    let mut batch = make_chunks(&data, config.train.unfold_steps);
    batch.truncate(chunks.max(1));
    if batch.is_empty() {
        return Err(Error::Usage(format!(
            "no training chunk of {} frames contains a target",
            config.train.unfold_steps
        )));
    }
    let opts = GradCheckOptions {
        max_coords,
        seed: config.train.seed,
    };
    let report = finite_diff_check(&model, &batch, eps, opts)?;
    writeln!(out, "{report}").map_err(out_err)?;
    if report.max_rel() >= tol {
        return Err(Error::Consistency(format!(
            "gradient check failed: {} has relative error {:.3e} >= {tol:e}",
            report.tensors[0].name,
            report.max_rel()
        )));
    }
    Ok(())
}

fn describe_layer(spec: &LayerSpec) -> String {
    format!("{} {}->{}", spec.family(), spec.input_dim(), spec.output_dim())
}

fn count(config_path: &Path, out: &mut dyn Write) -> Result<()> {
    let config = load_config(config_path)?;
    let c = count_params(&config.layers, Some(&config.head));
    let mut text = String::new();
    for (k, (spec, n)) in c.layers.iter().enumerate() {
        text.push_str(&format!("layer {k} {}: {n}\n", describe_layer(spec)));
    }
    if let Some(h) = &c.head {
        text.push_str(&format!("head {}->{}: {h}\n", config.head.input, config.head.output));
    }
    text.push_str(&format!("hidden layers: {}\n", group_digits(c.hidden().total())));
    text.push_str(&format!("total: {}\n", group_digits(c.total().total())));
    out.write_all(text.as_bytes()).map_err(out_err)
}

fn profile(checkpoint: &Path, out_path: Option<&Path>, layer: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let (_, state) = open_checkpoint(checkpoint)?;
    let is_stu = |l: &Layer| matches!(l, Layer::Lstm(p) if matches!(p.variant(), LstmVariant::SemiTied(_)));
    let index = match layer {
        Some(i) => i,
        None => state
            .model
            .layers
            .iter()
            .position(is_stu)
            .ok_or_else(|| Error::Usage("model has no semi-tied LSTM layer".into()))?,
    };
    let Some(Layer::Lstm(p)) = state.model.layers.get(index) else {
        return Err(Error::Usage(format!("layer {index} is not an LSTM layer")));
    };
    let rows = gate_profile(p)?;
    let mut csv = format!("{PROFILE_HEADER}\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.unit, r.input_gate, r.forget_gate, r.candidate));
    }
    let path = out_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint.with_file_name("profile.csv"));
    write_text(&path, &csv)?;
    let i: Vec<f64> = rows.iter().map(|r| r.input_gate).collect();
    let f: Vec<f64> = rows.iter().map(|r| r.forget_gate).collect();
    writeln!(
        out,
        "wrote {} ({} units); spearman(input_gate, forget_gate)={}",
        path.display(),
        rows.len(),
        spearman(&i, &f)
    )
    .map_err(out_err)
}

fn gen_data(task: &str, config: Option<&Path>, out_path: &Path, out: &mut dyn Write) -> Result<()> {
    let data = match (task.parse::<Split>(), config) {
        (Ok(split), Some(c)) => load_config(c)?.dataset(split)?,
        (Ok(_), None) => return Err(Error::Usage(format!("split '{task}' needs --config"))),
        (Err(_), _) => inline_task(task)?,
    };
    let file = fs::File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&data, &mut w).map_err(|e| Error::io(out_path, e))?;
    w.flush().map_err(|e| Error::io(out_path, e))?;
    writeln!(out, "wrote {} ({} sequences, {} frames)", out_path.display(), data.sequences.len(), data.frames())
        .map_err(out_err)
}

/// Parses `argv` (program name first) and runs the subcommand, writing
/// human-readable output to `out`.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(out_err)?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return Err(Error::Usage(first.trim_start_matches("error: ").to_owned()));
        }
    };
    match cli.command {
        Command::Train {
            config,
            resume,
            out_dir,
        } => train(&config, resume.as_deref(), out_dir.as_deref(), out),
        Command::Eval { checkpoint, task } => eval(&checkpoint, &task, out),
        Command::GradCheck {
            config,
            eps,
            tol,
            chunks,
            max_coords,
        } => grad_check(&config, eps, tol, chunks, max_coords, out),
        Command::CountParams { config } => count(&config, out),
        Command::GateProfile { checkpoint, out: path, layer } => profile(&checkpoint, path.as_deref(), layer, out),
        Command::GenData { task, config, out: path } => gen_data(&task, config.as_deref(), &path, out),
    }
}

/// Entry point for the `stu` binary.
pub fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run_command(std::env::args_os(), &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
