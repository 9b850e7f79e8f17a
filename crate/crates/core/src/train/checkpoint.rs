//! Binary model container.
//!
//! ```text
//! magic "ARGCKPT\0" | u32 version | u32 len + config text
//! | u32 input_dim | u32 hidden_dim | u32 actions | u32 activities | u8 relational
//! | u32 branches, each: u32 len + mode | u32 d_k | u8 mu kind + f64 mu | u32 layers
//! | u32 tensors, each: u32 len + name | u32 rows | u32 cols | f64 values
//! | u32 crc32 of everything before it
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::config::{parse_kv_text, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{GraphBranch, Linear, ModelParams};
use crate::numeric::Matrix;
use crate::relation::{MuRule, RelationMode, RelationParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ARGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::CheckpointFormat(format!("{v} does not fit in 32 bits")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CheckpointFormat("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::CheckpointFormat("string is not UTF-8".into()))
    }
}

pub fn encode_checkpoint(m: &ModelParams, cfg: &TrainConfig) -> Result<Vec<u8>> {
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    w.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    w.str(&cfg.to_kv_text())?;
    let dims = m.dims();
    w.u32(dims.input_dim)?;
    w.u32(dims.hidden_dim)?;
    w.u32(dims.num_actions)?;
    w.u32(dims.num_activities)?;
    w.u8(u8::from(m.relational));
    w.u32(m.branches.len())?;
    for b in &m.branches {
        w.str(b.mode.as_str())?;
        w.u32(b.relation.d_k)?;
        match b.relation.mu {
            MuRule::FractionOfWidth(f) => {
                w.u8(0);
                w.f64(f);
            }
            MuRule::Pixels(p) => {
                w.u8(1);
                w.f64(p);
            }
        }
        w.u32(b.gcn.len())?;
    }
    let tensors = m.tensors();
    w.u32(tensors.len())?;
    for (name, t) in tensors {
        w.str(&name)?;
        w.u32(t.rows())?;
        w.u32(t.cols())?;
        for &v in t.data() {
            w.f64(v);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

/// Checks magic, then version, then checksum, then decodes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, TrainConfig)> {
    let magic_len = CHECKPOINT_MAGIC.len();
    let prefix = bytes.len().min(magic_len);
    if bytes[..prefix] != CHECKPOINT_MAGIC[..prefix] {
        return Err(Error::BadMagic);
    }
    if bytes.len() < magic_len + 8 {
        return Err(Error::Checksum);
    }
    let version = u32::from_le_bytes(bytes[magic_len..magic_len + 4].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Checksum);
    }

    let mut r = Reader { buf: body, pos: magic_len + 4 };
    let cfg = TrainConfig::from_pairs(&parse_kv_text(r.str()?)?)?;
    let (input_dim, hidden_dim, actions, activities) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let relational = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::CheckpointFormat(format!("relational flag {v}"))),
    };
    let mut branches = Vec::new();
    for _ in 0..r.u32()? {
        let mode: RelationMode = r.str()?.parse()?;
        let d_k = r.u32()?;
        let mu = match (r.u8()?, r.f64()?) {
            (0, f) => MuRule::FractionOfWidth(f),
            (1, p) => MuRule::Pixels(p),
            (k, _) => return Err(Error::CheckpointFormat(format!("threshold kind {k}"))),
        };
        let layers = r.u32()?;
        branches.push(GraphBranch {
            mode,
            relation: RelationParams::zeros(hidden_dim, d_k, mu),
            gcn: vec![Matrix::zeros(hidden_dim, hidden_dim); layers],
        });
    }
    let mut m = ModelParams {
        embedder: Linear::zeros(input_dim, hidden_dim),
        branches,
        action_head: Linear::zeros(hidden_dim, actions),
        activity_head: Linear::zeros(hidden_dim, activities),
        relational,
    };

    let names: Vec<(String, (usize, usize))> = m.tensors().iter().map(|(n, t)| (n.clone(), t.shape())).collect();
    let count = r.u32()?;
    if count != names.len() {
        return Err(Error::CheckpointFormat(format!("{count} tensors, structure needs {}", names.len())));
    }
    for ((name, shape), slot) in names.iter().zip(m.tensors_mut()) {
        let stored = r.str()?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        if stored != name || (rows, cols) != *shape {
            return Err(Error::CheckpointFormat(format!(
                "tensor `{stored}` {rows}x{cols} where `{name}` {}x{} was expected",
                shape.0, shape.1
            )));
        }
        for v in slot.data_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != body.len() {
        return Err(Error::CheckpointFormat("trailing bytes".into()));
    }
    if !m.is_finite() {
        return Err(Error::NumericNonFinite("checkpoint weights".into()));
    }
    Ok((m, cfg))
}

pub fn save_checkpoint(m: &ModelParams, cfg: &TrainConfig, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(m, cfg)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, TrainConfig)> {
    decode_checkpoint(&std::fs::read(path)?)
}
