//! Binary checkpoint container.
//!
//! Layout, all integers and reals little-endian:
//!
//! | field | encoding |
//! |---|---|
//! | magic | `STUCKPT\0` |
//! | version | u32 |
//! | config text | u64 length + UTF-8 bytes |
//! | epoch | u64 |
//! | scheduler | lr f64, phase u8, has-best u8, best f64 |
//! | rng | seed u64, counter u64 |
//! | history | u64 count, then per row: epoch u64 and five f64 |
//! | tensors | u64 count, then per tensor: u32 name length, name, rows u64, cols u64, data f64s |
//! | checksum | SHA-256 of every preceding byte |
//!
//! Parameters are stored under their model names, optimizer velocity under
//! `velocity/<name>`.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::training::{EpochRecord, Phase, TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"STUCKPT\0";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
const VELOCITY_PREFIX: &str = "velocity/";

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Normalized run configuration the state was trained under.
    pub config_text: String,
    pub epoch: usize,
    pub lr: f64,
    pub phase: Phase,
    pub best: Option<f64>,
    pub rng: Rng,
    pub history: Vec<EpochRecord>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(state: &TrainState, config_text: &str) -> Self {
        let mut tensors = Vec::new();
        for (info, t) in state.model.param_infos().iter().zip(state.model.tensors()) {
            tensors.push((info.name.clone(), t.clone()));
        }
        for (info, t) in state.velocity.iter() {
            tensors.push((format!("{VELOCITY_PREFIX}{}", info.name), t.clone()));
        }
        Checkpoint {
            config_text: config_text.to_owned(),
            epoch: state.epoch,
            lr: state.scheduler.lr(),
            phase: state.scheduler.phase(),
            best: state.scheduler.best(),
            rng: state.rng,
            history: state.history.clone(),
            tensors,
        }
    }

    /// Loads the stored tensors into a model of the same architecture.
    pub fn restore(&self, template: Model, config: &TrainConfig) -> Result<TrainState> {
        let mut state = TrainState::new(template, config);
        let infos = state.model.param_infos();
        let expected = 2 * infos.len();
        if self.tensors.len() != expected {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model needs {expected}",
                self.tensors.len()
            )));
        }
        let (params, velocity) = self.tensors.split_at(infos.len());
        let fill = |dst: Vec<&mut Tensor>, src: &[(String, Tensor)], prefix: &str| -> Result<()> {
            for ((info, d), (name, s)) in infos.iter().zip(dst).zip(src) {
                if *name != format!("{prefix}{}", info.name) || d.shape() != s.shape() {
                    return Err(Error::Format(format!(
                        "tensor {name} {:?} does not fit model tensor {prefix}{} {:?}",
                        s.shape(),
                        info.name,
                        d.shape()
                    )));
                }
                *d = s.clone();
            }
            Ok(())
        };
        fill(state.model.tensors_mut(), params, "")?;
        fill(state.velocity.tensors_mut().iter_mut().collect(), velocity, VELOCITY_PREFIX)?;
        state.scheduler = state.scheduler.restore(self.lr, self.phase, self.best);
        state.epoch = self.epoch;
        state.rng = self.rng;
        state.history = self.history.clone();
        Ok(state)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        put_u64(&mut b, self.config_text.len() as u64);
        b.extend_from_slice(self.config_text.as_bytes());
        put_u64(&mut b, self.epoch as u64);
        put_f64(&mut b, self.lr);
        b.push(self.phase.code());
        b.push(self.best.is_some() as u8);
        put_f64(&mut b, self.best.unwrap_or(0.0));
        put_u64(&mut b, self.rng.seed());
        put_u64(&mut b, self.rng.counter());
        put_u64(&mut b, self.history.len() as u64);
        for r in &self.history {
            put_u64(&mut b, r.epoch as u64);
            for v in [r.train_loss, r.cv_loss, r.cv_metric, r.lr, r.seconds] {
                put_f64(&mut b, v);
            }
        }
        put_u64(&mut b, self.tensors.len() as u64);
        for (name, t) in &self.tensors {
            b.extend_from_slice(&(name.len() as u32).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            put_u64(&mut b, t.rows() as u64);
            put_u64(&mut b, t.cols() as u64);
            for v in t.as_slice() {
                put_f64(&mut b, *v);
            }
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(digest.as_slice());
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        if bytes.len() >= 12 {
            let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
            if found != VERSION {
                return Err(Error::VersionMismatch {
                    found,
                    expected: VERSION,
                });
            }
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(Error::Checksum);
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum);
        }

        let mut r = Reader { buf: body, pos: 12 };
        let len = r.u64()? as usize;
        let config_text = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Format("config text is not UTF-8".into()))?;
        let epoch = r.u64()? as usize;
        let lr = r.f64()?;
        let phase = Phase::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown scheduler phase".into()))?;
        let has_best = r.u8()? != 0;
        let best = r.f64()?;
        let rng = Rng::from_parts(r.u64()?, r.u64()?);
        let rows = r.u64()? as usize;
        let mut history = Vec::with_capacity(rows.min(1 << 16));
        for _ in 0..rows {
            history.push(EpochRecord {
                epoch: r.u64()? as usize,
                train_loss: r.f64()?,
                cv_loss: r.f64()?,
                cv_metric: r.f64()?,
                lr: r.f64()?,
                seconds: r.f64()?,
            });
        }
        let count = r.u64()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name =
                String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l <= (body.len() - r.pos) / 8)
                .ok_or_else(|| Error::Format(format!("tensor {name} overruns the file")))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push((name, Tensor::new(rows, cols, data)?));
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after tensor table".into()));
        }
        Ok(Checkpoint {
            config_text,
            epoch,
            lr,
            phase,
            best: has_best.then_some(best),
            rng,
            history,
            tensors,
        })
    }
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("unexpected end of checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_checkpoint(path: &Path, state: &TrainState, config_text: &str) -> Result<()> {
    let bytes = Checkpoint::capture(state, config_text).encode();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{HeadKind, HeadSpec, LayerSpec, LstmVariant, StuFlags};

    fn state() -> (TrainState, TrainConfig) {
        let layers = [LayerSpec::Lstm {
            input: 2,
            hidden: 3,
            variant: LstmVariant::SemiTied(StuFlags {
                untie_v: true,
                ..Default::default()
            }),
        }];
        let head = HeadSpec {
            input: 3,
            output: 1,
            kind: HeadKind::Linear,
        };
        let config = TrainConfig::default();
        let m = Model::init(&layers, head, 1.0, &mut Rng::new(5)).unwrap();
        let mut s = TrainState::new(m, &config);
        s.velocity.tensors_mut()[0].fill(0.25);
        s.scheduler.update(0.7, 1);
        s.rng.next_u64();
        s.epoch = 1;
        s.history.push(EpochRecord {
            epoch: 1,
            train_loss: 0.9,
            cv_loss: 0.7,
            cv_metric: 0.7,
            lr: 0.1,
            seconds: 0.0,
        });
        (s, config)
    }

    fn template(s: &TrainState) -> Model {
        let mut m = s.model.clone();
        m.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        m
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let (s, config) = state();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&path, &s, "seed=1\n").unwrap();
        let c = load_checkpoint(&path).unwrap();
        assert_eq!(c.config_text, "seed=1\n");
        let back = c.restore(template(&s), &config).unwrap();
        assert_eq!(back, s);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1, "temp file left behind");
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let (s, _) = state();
        let bytes = Checkpoint::capture(&s, "").encode();
        for cut in [1, 8, 100, bytes.len() - 20] {
            let e = Checkpoint::decode(&bytes[..cut]).unwrap_err();
            assert_eq!(e.kind(), "checksum", "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert_eq!(Checkpoint::decode(&flipped).unwrap_err().kind(), "checksum");
    }

    #[test]
    fn version_and_magic_are_distinct_errors() {
        let (s, _) = state();
        let mut bytes = Checkpoint::capture(&s, "").encode();
        bytes[8] = 9;
        assert_eq!(Checkpoint::decode(&bytes).unwrap_err().kind(), "version");
        bytes[0] = b'X';
        assert_eq!(Checkpoint::decode(&bytes).unwrap_err().kind(), "format");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let e = load_checkpoint(Path::new("/nonexistent/x.ckpt")).unwrap_err();
        assert_eq!(e.kind(), "io");
    }

    #[test]
    fn wrong_architecture_is_rejected() {
        let (s, config) = state();
        let c = Checkpoint::capture(&s, "");
        let other = Model::new(
            &[],
            HeadSpec {
                input: 2,
                output: 1,
                kind: HeadKind::Linear,
            },
        )
        .unwrap();
        assert_eq!(c.restore(other, &config).unwrap_err().kind(), "format");
    }
}
