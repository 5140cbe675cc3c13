//! Bit-exact model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "OCRX" | version u32 | kind(len u32, bytes) | epoch u64
//! rng flag u8 [seed 32B | word_pos u128 | stream u64]
//! tensor count u32 | { name(len,bytes) | ndim u32 | dims u32.. | f32 payload }..
//! opt    count u32 | { name(len,bytes) | step u64 | lr,b1,b2,eps f64 | len u32 | m f32.. | v f32.. }..
//! ```
//!
//! save -> load -> save is byte-identical; that is what makes resumed training
//! traces equal uninterrupted ones.

use std::fs;
use std::path::Path;

use super::{IoError, Result};
use crate::rng::RngState;
use crate::tensor::{AdamConfig, AdamState, Tensor};

pub const MAGIC: &[u8; 4] = b"OCRX";
pub const VERSION: u32 = 1;

pub const MODEL_KINDS: &[&str] = &["detector", "convlstm", "autoencoder", "cgan", "siamese"];

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptEntry {
    pub name: String,
    pub step_count: u64,
    pub config: AdamConfig,
    pub first_moment: Vec<f32>,
    pub second_moment: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_kind: String,
    pub epoch: u64,
    pub rng: Option<RngState>,
    pub tensors: Vec<NamedTensor>,
    pub opt: Vec<OptEntry>,
}

impl Checkpoint {
    pub fn new(model_kind: &str) -> Self {
        Checkpoint {
            model_kind: model_kind.to_string(),
            epoch: 0,
            rng: None,
            tensors: Vec::new(),
            opt: Vec::new(),
        }
    }

    pub fn from_params(model_kind: &str, params: &[(String, Tensor<f32>)]) -> Self {
        let mut ck = Checkpoint::new(model_kind);
        for (name, t) in params {
            ck.tensors.push(NamedTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.to_vec(),
            });
        }
        ck
    }

    pub fn with_opt(mut self, params: &[(String, Tensor<f32>)], states: &[AdamState<f32>]) -> Self {
        for ((name, _), s) in params.iter().zip(states) {
            self.opt.push(OptEntry {
                name: name.clone(),
                step_count: s.step_count,
                config: s.config,
                first_moment: s.first_moment.clone(),
                second_moment: s.second_moment.clone(),
            });
        }
        self
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.model_kind != kind {
            return Err(IoError::UnknownModelKind(format!(
                "expected {kind}, checkpoint holds {}",
                self.model_kind
            )));
        }
        Ok(())
    }

    /// Copy stored values into live parameters, matched by name.
    pub fn restore_params(&self, params: &[(String, Tensor<f32>)]) -> Result<()> {
        for (name, t) in params {
            let stored = self.tensor(name).ok_or_else(|| IoError::PayloadMismatch {
                name: name.clone(),
                shape: t.shape().to_vec(),
                len: 0,
            })?;
            if stored.shape != t.shape() {
                return Err(IoError::PayloadMismatch {
                    name: name.clone(),
                    shape: stored.shape.clone(),
                    len: t.numel(),
                });
            }
            t.set_data(&stored.data)?;
        }
        Ok(())
    }

    /// Rebuild Adam states in the order of `params`.
    pub fn restore_opt(&self, params: &[(String, Tensor<f32>)]) -> Result<Vec<AdamState<f32>>> {
        let mut out = Vec::with_capacity(params.len());
        for (name, t) in params {
            let e = self
                .opt
                .iter()
                .find(|e| &e.name == name)
                .ok_or_else(|| IoError::PayloadMismatch {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    len: 0,
                })?;
            out.push(AdamState {
                first_moment: e.first_moment.clone(),
                second_moment: e.second_moment.clone(),
                step_count: e.step_count,
                config: e.config,
            });
        }
        Ok(out)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.str(&ck.model_kind);
    w.u64(ck.epoch);
    match &ck.rng {
        Some(r) => {
            w.0.push(1);
            w.0.extend_from_slice(&r.seed);
            w.0.extend_from_slice(&r.word_pos.to_le_bytes());
            w.u64(r.stream);
        }
        None => w.0.push(0),
    }
    w.u32(ck.tensors.len() as u32);
    {
        let mut seen = std::collections::HashSet::new();
        for t in &ck.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(IoError::DuplicateName(t.name.clone()));
            }
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(IoError::PayloadMismatch {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    len: t.data.len(),
                });
            }
            w.str(&t.name);
            w.u32(t.shape.len() as u32);
            for &d in &t.shape {
                w.u32(d as u32);
            }
            w.f32s(&t.data);
        }
    }
    w.u32(ck.opt.len() as u32);
    for e in &ck.opt {
        w.str(&e.name);
        w.u64(e.step_count);
        w.f64(e.config.learning_rate);
        w.f64(e.config.beta1);
        w.f64(e.config.beta2);
        w.f64(e.config.epsilon);
        w.u32(e.first_moment.len() as u32);
        w.f32s(&e.first_moment);
        w.f32s(&e.second_moment);
    }
    fs::write(path, w.0)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(IoError::Parse {
                offset: self.pos,
                msg: format!("truncated: need {n} bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let pos = self.pos;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| IoError::Parse {
            offset: pos,
            msg: format!("bad utf-8 string: {e}"),
        })
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(IoError::BadVersion(version));
    }
    let model_kind = r.str()?;
    if !MODEL_KINDS.contains(&model_kind.as_str()) {
        return Err(IoError::UnknownModelKind(model_kind));
    }
    let epoch = r.u64()?;
    let rng = match r.u8()? {
        0 => None,
        1 => {
            let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
            let word_pos = r.u128()?;
            let stream = r.u64()?;
            Some(RngState {
                seed,
                word_pos,
                stream,
            })
        }
        v => {
            return Err(IoError::Parse {
                offset: r.pos - 1,
                msg: format!("bad rng flag {v}"),
            })
        }
    };
    let n_tensors = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..n_tensors {
        let name = r.str()?;
        if !seen.insert(name.clone()) {
            return Err(IoError::DuplicateName(name));
        }
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(IoError::Parse {
                offset: r.pos - 4,
                msg: format!("implausible rank {ndim}"),
            });
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel > 1 << 28 {
            return Err(IoError::Parse {
                offset: r.pos,
                msg: format!("implausible tensor size {numel}"),
            });
        }
        let data = r.f32s(numel)?;
        tensors.push(NamedTensor { name, shape, data });
    }
    let n_opt = r.u32()? as usize;
    let mut opt = Vec::with_capacity(n_opt);
    for _ in 0..n_opt {
        let name = r.str()?;
        let step_count = r.u64()?;
        let config = AdamConfig {
            learning_rate: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        };
        let len = r.u32()? as usize;
        if len > 1 << 28 {
            return Err(IoError::Parse {
                offset: r.pos - 4,
                msg: format!("implausible moment size {len}"),
            });
        }
        let first_moment = r.f32s(len)?;
        let second_moment = r.f32s(len)?;
        opt.push(OptEntry {
            name,
            step_count,
            config,
            first_moment,
            second_moment,
        });
    }
    if r.pos != bytes.len() {
        return Err(IoError::Parse {
            offset: r.pos,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(Checkpoint {
        model_kind,
        epoch,
        rng,
        tensors,
        opt,
    })
}
