use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DecodeError, Error, Result};
use crate::model::{Cmsc, CmscConfig};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{take, take_u32};

const MAGIC: &[u8; 8] = b"CMSCKPT1";

/// Decoded checkpoint contents: architecture, f32 weights and the number of
/// optimizer steps taken to produce them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: CmscConfig,
    pub params: ParamStore<f32>,
    pub step: u64,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Cmsc<T>, step: u64) -> Self {
        Checkpoint {
            config: model.config().clone(),
            params: model.params().cast(),
            step,
        }
    }

    /// Instantiates the stored architecture.
    pub fn model<T: Scalar>(&self) -> Result<Cmsc<T>> {
        Cmsc::from_params(self.config.clone(), self.params.cast())
    }

    /// Loads the weights into `config`, failing with a shape error naming
    /// the first parameter that does not fit.
    pub fn model_for<T: Scalar>(&self, config: &CmscConfig) -> Result<Cmsc<T>> {
        Cmsc::from_params(config.clone(), self.params.cast())
    }
}

/// Header: `step=`, the config as `key=value` lines, then one
/// `param <name> <d0,d1,..> <byte offset>` line per parameter.
pub fn save_checkpoint<T: Scalar>(model: &Cmsc<T>, step: u64) -> Vec<u8> {
    encode(&Checkpoint::from_model(model, step))
}

fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut header = format!("step={}\n{}", ckpt.step, ckpt.config.to_kv());
    let mut offset = 0usize;
    for p in ckpt.params.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        writeln!(header, "param {} {} {offset}", p.name, dims.join(",")).expect("string write");
        offset += p.value.len() * 4;
    }
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for p in ckpt.params.iter() {
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = 0;
    if take(bytes, &mut pos, MAGIC.len())? != MAGIC {
        return Err(DecodeError::BadMagic { expected: "CMSCKPT1" }.into());
    }
    let header_len = take_u32(bytes, &mut pos)? as usize;
    let header = std::str::from_utf8(take(bytes, &mut pos, header_len)?)
        .map_err(|e| DecodeError::Header(format!("not UTF-8: {e}")))?;
    let payload = &bytes[pos..];

    let bad = |m: String| Error::Decode(DecodeError::Header(m));
    let mut config = CmscConfig::full();
    let mut step = None;
    let mut entries = Vec::new();
    for line in header.lines().filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("param ") {
            let f: Vec<&str> = rest.split(' ').collect();
            let [name, dims, offset] = f[..] else {
                return Err(bad(format!("param line {line:?}")));
            };
            let shape = dims
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("shape in {line:?}")))?;
            let offset = offset.parse().map_err(|_| bad(format!("offset in {line:?}")))?;
            entries.push(Entry {
                name: name.to_string(),
                shape,
                offset,
            });
        } else if let Some((k, v)) = line.split_once('=') {
            if k == "step" {
                step = Some(v.parse().map_err(|_| bad(format!("step {v:?}")))?);
            } else if !config.set(k, v).map_err(|e| bad(e.to_string()))? {
                return Err(bad(format!("unknown key {k:?}")));
            }
        } else {
            return Err(bad(format!("unparsable line {line:?}")));
        }
    }
    let step = step.ok_or_else(|| bad("missing step".into()))?;
    config.validate().map_err(|e| bad(e.to_string()))?;

    let mut params = ParamStore::new();
    let mut expected_offset = 0usize;
    for e in entries {
        let len = e
            .shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| bad(format!("{} shape overflows", e.name)))?;
        if e.offset != expected_offset {
            return Err(bad(format!(
                "{} at offset {}, expected {expected_offset}",
                e.name, e.offset
            )));
        }
        let end = e.offset + len;
        if end > payload.len() {
            return Err(DecodeError::Truncated {
                needed: pos + end,
                available: bytes.len(),
            }
            .into());
        }
        let data = payload[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let value = Tensor::from_vec(&e.shape, data).map_err(|err| bad(err.to_string()))?;
        params.push(e.name, value).map_err(|err| bad(err.to_string()))?;
        expected_offset = end;
    }
    if expected_offset != payload.len() {
        return Err(DecodeError::TrailingBytes(payload.len() - expected_offset).into());
    }
    Ok(Checkpoint { config, params, step })
}

pub fn save_checkpoint_file<T: Scalar>(path: impl AsRef<Path>, model: &Cmsc<T>, step: u64) -> Result<()> {
    std::fs::write(path, save_checkpoint(model, step))?;
    Ok(())
}

pub fn load_checkpoint_file(path: impl AsRef<Path>) -> Result<Checkpoint> {
    load_checkpoint(&std::fs::read(path)?)
}
