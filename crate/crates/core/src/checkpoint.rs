//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "DGANCKPT" | version u32 | config text (u32 len + UTF-8)
//! iteration u64 | generator steps u64 | discriminator steps u64 | sampler cursor u64
//! tensor count u32 | tensors...
//! rng seed [u8; 32] | rng stream u64 | rng word position u128
//! end marker "DGANEND!"
//! ```
//!
//! Each tensor is `name (u16 len + UTF-8) | dtype u8 | rank u8 | dims u64... |
//! payload`, row-major. Dtype codes: 0 = f32, 1 = f64, 2 = u32.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::NamedVar;
use crate::optim::Adam;
use crate::rng::{RngState, SeededRng};
use crate::trainer::{Sampler, TrainState};

pub const MAGIC: &[u8; 8] = b"DGANCKPT";
pub const END_MARKER: &[u8; 8] = b"DGANEND!";
pub const VERSION: u32 = 1;

const SAMPLER_ORDER: &str = "sampler.order";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorDType {
    F32,
    F64,
    U32,
}

impl TensorDType {
    fn code(self) -> u8 {
        match self {
            TensorDType::F32 => 0,
            TensorDType::F64 => 1,
            TensorDType::U32 => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => TensorDType::F32,
            1 => TensorDType::F64,
            2 => TensorDType::U32,
            _ => return None,
        })
    }

    fn width(self) -> usize {
        match self {
            TensorDType::F64 => 8,
            _ => 4,
        }
    }

    fn of(dtype: DType) -> Result<Self> {
        match dtype {
            DType::F32 => Ok(TensorDType::F32),
            DType::F64 => Ok(TensorDType::F64),
            DType::U32 => Ok(TensorDType::U32),
            other => Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
        }
    }
}

/// A tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub dtype: TensorDType,
    pub dims: Vec<usize>,
    /// Little-endian payload.
    pub data: Vec<u8>,
}

impl RawTensor {
    fn from_tensor(name: &str, t: &Tensor) -> Result<Self> {
        let dtype = TensorDType::of(t.dtype())?;
        let flat = t.flatten_all()?;
        let mut data = Vec::with_capacity(flat.elem_count() * dtype.width());
        match dtype {
            TensorDType::F32 => flat.to_vec1::<f32>()?.iter().for_each(|v| data.extend(v.to_le_bytes())),
            TensorDType::F64 => flat.to_vec1::<f64>()?.iter().for_each(|v| data.extend(v.to_le_bytes())),
            TensorDType::U32 => flat.to_vec1::<u32>()?.iter().for_each(|v| data.extend(v.to_le_bytes())),
        }
        Ok(Self {
            name: name.to_string(),
            dtype,
            dims: t.dims().to_vec(),
            data,
        })
    }

    fn to_tensor(&self) -> Result<Tensor> {
        let dev = &Device::Cpu;
        let t = match self.dtype {
            TensorDType::F32 => {
                let v: Vec<f32> = self.data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                Tensor::from_vec(v, self.dims.as_slice(), dev)?
            }
            TensorDType::F64 => {
                let v: Vec<f64> = self.data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                Tensor::from_vec(v, self.dims.as_slice(), dev)?
            }
            TensorDType::U32 => {
                let v: Vec<u32> = self.data.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
                Tensor::from_vec(v, self.dims.as_slice(), dev)?
            }
        };
        Ok(t)
    }
}

/// Decoded container contents, before they are matched against a model.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointFile {
    pub version: u32,
    pub config_text: String,
    pub iteration: u64,
    pub g_steps: u64,
    pub d_steps: u64,
    pub sampler_cursor: u64,
    pub tensors: Vec<RawTensor>,
    pub rng: RngState,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String> {
        String::from_utf8(self.take(len, what)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parses the container structure without building a model.
pub fn decode(bytes: &[u8]) -> Result<CheckpointFile> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let len = r.u32("config length")? as usize;
    let config_text = r.string(len, "config text")?;
    let iteration = r.u64("iteration")?;
    let g_steps = r.u64("generator step count")?;
    let d_steps = r.u64("discriminator step count")?;
    let sampler_cursor = r.u64("sampler cursor")?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let name_len = r.u16("tensor name length")? as usize;
        let name = r.string(name_len, &format!("tensor #{i} name"))?;
        let tensor_err = |msg: String| Error::CheckpointTensor { name: name.clone(), msg };
        let code = r.u8("dtype")?;
        let dtype = TensorDType::from_code(code).ok_or_else(|| tensor_err(format!("unknown dtype code {code}")))?;
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut elems: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(r.u64("dimension")?).map_err(|_| tensor_err("dimension overflows".into()))?;
            elems = elems.checked_mul(d).ok_or_else(|| tensor_err("element count overflows".into()))?;
            dims.push(d);
        }
        let n_bytes = elems
            .checked_mul(dtype.width())
            .ok_or_else(|| tensor_err("payload size overflows".into()))?;
        if n_bytes > r.remaining() {
            return Err(tensor_err("truncated payload".into()));
        }
        let data = r.take(n_bytes, "payload")?.to_vec();
        tensors.push(RawTensor { name, dtype, dims, data });
    }
    let rng = RngState {
        seed: r.array("rng seed")?,
        stream: r.u64("rng stream")?,
        word_pos: u128::from_le_bytes(r.array("rng position")?),
    };
    if r.take(8, "end marker")? != END_MARKER {
        return Err(Error::Checkpoint("missing end marker".into()));
    }
    if r.remaining() != 0 {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok(CheckpointFile {
        version,
        config_text,
        iteration,
        g_steps,
        d_steps,
        sampler_cursor,
        tensors,
        rng,
    })
}

/// Serializes the container.
pub fn encode(file: &CheckpointFile) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(file.version.to_le_bytes());
    let cfg = file.config_text.as_bytes();
    out.extend(u32::try_from(cfg.len()).map_err(|_| Error::Checkpoint("config too long".into()))?.to_le_bytes());
    out.extend(cfg);
    for v in [file.iteration, file.g_steps, file.d_steps, file.sampler_cursor] {
        out.extend(v.to_le_bytes());
    }
    out.extend((file.tensors.len() as u32).to_le_bytes());
    for t in &file.tensors {
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::CheckpointTensor {
            name: t.name.clone(),
            msg: "name too long".into(),
        })?;
        out.extend(len.to_le_bytes());
        out.extend(name);
        out.push(t.dtype.code());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend((d as u64).to_le_bytes());
        }
        out.extend(&t.data);
    }
    out.extend(file.rng.seed);
    out.extend(file.rng.stream.to_le_bytes());
    out.extend(file.rng.word_pos.to_le_bytes());
    out.extend(END_MARKER);
    Ok(out)
}

fn moment_names<'a>(prefix: &str, opt: &'a Adam) -> impl Iterator<Item = (String, String)> + 'a {
    let prefix = prefix.to_string();
    opt.params()
        .iter()
        .map(move |p| (format!("{prefix}.m.{}", p.name), format!("{prefix}.v.{}", p.name)))
}

pub fn to_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    for v in state.named_vars() {
        tensors.push(RawTensor::from_tensor(&v.name, v.var.as_tensor())?);
    }
    for (prefix, opt) in [("opt_g", &state.opt_g), ("opt_d", &state.opt_d)] {
        for (name, m, v) in opt.moments() {
            tensors.push(RawTensor::from_tensor(&format!("{prefix}.m.{name}"), m)?);
            tensors.push(RawTensor::from_tensor(&format!("{prefix}.v.{name}"), v)?);
        }
    }
    let order = Tensor::from_vec(state.sampler.order.clone(), state.sampler.order.len(), &Device::Cpu)?;
    tensors.push(RawTensor::from_tensor(SAMPLER_ORDER, &order)?);
    encode(&CheckpointFile {
        version: VERSION,
        config_text: state.config.to_text(),
        iteration: state.iteration,
        g_steps: state.opt_g.steps(),
        d_steps: state.opt_d.steps(),
        sampler_cursor: state.sampler.cursor as u64,
        tensors,
        rng: state.rng.state(),
    })
}

fn check_matches(raw: &RawTensor, expected: &Tensor) -> Result<()> {
    let dtype = TensorDType::of(expected.dtype())?;
    if raw.dtype != dtype {
        return Err(Error::CheckpointTensor {
            name: raw.name.clone(),
            msg: format!("dtype {:?}, model expects {dtype:?}", raw.dtype),
        });
    }
    if raw.dims != expected.dims() {
        return Err(Error::CheckpointTensor {
            name: raw.name.clone(),
            msg: format!("shape {:?}, model expects {:?}", raw.dims, expected.dims()),
        });
    }
    Ok(())
}

fn restore_moments(
    opt: &mut Adam,
    prefix: &str,
    steps: u64,
    raw: &mut HashMap<String, RawTensor>,
) -> Result<()> {
    let names: Vec<_> = moment_names(prefix, opt).collect();
    let mut first = Vec::with_capacity(names.len());
    let mut second = Vec::with_capacity(names.len());
    for (p, (m_name, v_name)) in opt.params().iter().zip(names) {
        for (name, out) in [(m_name, &mut first), (v_name, &mut second)] {
            let t = raw.remove(&name).ok_or_else(|| Error::CheckpointTensor {
                name: name.clone(),
                msg: "missing".into(),
            })?;
            check_matches(&t, p.var.as_tensor())?;
            out.push(t.to_tensor()?);
        }
    }
    opt.restore(steps, first, second);
    Ok(())
}

fn assign(vars: &[NamedVar], raw: &mut HashMap<String, RawTensor>) -> Result<()> {
    for v in vars {
        let t = raw.remove(&v.name).ok_or_else(|| Error::CheckpointTensor {
            name: v.name.clone(),
            msg: "missing".into(),
        })?;
        check_matches(&t, v.var.as_tensor())?;
        v.var.set(&t.to_tensor()?)?;
    }
    Ok(())
}

/// Rebuilds a state from checkpoint bytes. Either every tensor matches the
/// model described by the embedded config or nothing is returned.
pub fn from_bytes(bytes: &[u8]) -> Result<TrainState> {
    let file = decode(bytes)?;
    let config = RunConfig::parse(&file.config_text)?;
    let mut state = TrainState::new(&config)?;
    let mut raw: HashMap<String, RawTensor> = HashMap::with_capacity(file.tensors.len());
    for t in file.tensors {
        let name = t.name.clone();
        if raw.insert(name.clone(), t).is_some() {
            return Err(Error::CheckpointTensor { name, msg: "duplicated".into() });
        }
    }
    assign(&state.named_vars(), &mut raw)?;
    restore_moments(&mut state.opt_g, "opt_g", file.g_steps, &mut raw)?;
    restore_moments(&mut state.opt_d, "opt_d", file.d_steps, &mut raw)?;
    let order = raw.remove(SAMPLER_ORDER).ok_or_else(|| Error::CheckpointTensor {
        name: SAMPLER_ORDER.into(),
        msg: "missing".into(),
    })?;
    if order.dtype != TensorDType::U32 || order.dims.len() != 1 {
        return Err(Error::CheckpointTensor {
            name: SAMPLER_ORDER.into(),
            msg: "expected a rank-1 u32 tensor".into(),
        });
    }
    let order: Vec<u32> = order.to_tensor()?.to_vec1()?;
    let cursor = usize::try_from(file.sampler_cursor)
        .ok()
        .filter(|&c| c <= order.len())
        .ok_or_else(|| Error::Checkpoint("sampler cursor past the end of its order".into()))?;
    if let Some(name) = raw.keys().next() {
        return Err(Error::CheckpointTensor {
            name: name.clone(),
            msg: "not part of this model".into(),
        });
    }
    state.sampler = Sampler { order, cursor };
    state.iteration = file.iteration;
    state.rng = SeededRng::from_state(file.rng);
    Ok(state)
}

/// Writes through a temporary file so a crash never leaves a partial
/// checkpoint under `path`.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let bytes = to_bytes(state)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    from_bytes(&std::fs::read(path)?)
}
