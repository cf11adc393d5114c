//! Binary checkpoint format.
//!
//! ```text
//! "PIRA"                      magic, 4 bytes
//! u32 LE                      format version
//! u32 LE + bytes              JSON header: {"config", "vocab", "meta"}
//! u32 LE                      tensor count
//! per tensor:
//!   u32 LE + bytes            name (UTF-8)
//!   u32 LE, u32 LE * ndim     shape
//!   f32 LE * prod(shape)      data
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::Vocab;
use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::params::ParamStore;
use super::RewardModel;

pub const MAGIC: &[u8; 4] = b"PIRA";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub step: u64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    meta: TrainingMeta,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub model: RewardModel,
    pub meta: TrainingMeta,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_checkpoint(model: &RewardModel, meta: &TrainingMeta) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        vocab: model.vocab().clone(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, json.len() as u32);
    buf.extend_from_slice(&json);
    put_u32(&mut buf, model.params().len() as u32);
    for (name, t) in model.params().iter() {
        put_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut buf, d as u32);
        }
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
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
            .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a checkpoint. With `expected`, refuses a file whose model
/// config differs.
pub fn decode_checkpoint(buf: &[u8], expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::CorruptCheckpoint(format!("unsupported format version {version}")));
    }
    let hlen = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    if let Some(exp) = expected {
        if *exp != header.config {
            return Err(Error::ConfigMismatch(format!(
                "file has {:?}, expected {:?}",
                header.config, exp
            )));
        }
    }
    header
        .config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;

    let count = r.u32()? as usize;
    let layout = header.config.param_shapes();
    if count != layout.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{count} tensors, config needs {}",
            layout.len()
        )));
    }
    let mut params = ParamStore::default();
    for (want_name, want_shape) in layout {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != want_name || shape != want_shape {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor {name} {shape:?}, expected {want_name} {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(n * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        if !t.is_finite() {
            return Err(Error::CorruptCheckpoint(format!("tensor {name} has non-finite values")));
        }
        params.insert(name, t);
    }
    if r.pos != buf.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    let model = RewardModel::from_parts(header.config, header.vocab, params)?;
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}

pub fn save_checkpoint(model: &RewardModel, meta: &TrainingMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&buf, expected)
}
