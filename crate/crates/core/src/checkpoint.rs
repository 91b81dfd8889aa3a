//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AEGD" | version u32 | kind u8 | digest [u8; 32] | count u32
//! count x ( name_len u32 | name utf-8 | ndim u32 | dims u32 x ndim | f32 x prod(dims) )
//! crc32 u32 of every preceding byte
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::nn::{ParamStore, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AEGD";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    AutoEnc,
    Dclnn,
}

impl ModelKind {
    fn code(self) -> u8 {
        match self {
            ModelKind::AutoEnc => 0,
            ModelKind::Dclnn => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ModelKind::AutoEnc),
            1 => Ok(ModelKind::Dclnn),
            c => Err(Error::Checkpoint(format!("unknown model kind {c}"))),
        }
    }
}

/// SHA-256 of a model description and the channel layout it was trained on.
pub fn config_digest(description: &str, channels: &[String]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(description.as_bytes());
    h.update(b"\n");
    h.update(channels.join(",").as_bytes());
    h.finalize().into()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub digest: [u8; 32],
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    /// Every parameter of `store`, in store order.
    pub fn from_store(kind: ModelKind, digest: [u8; 32], store: &ParamStore<f32>) -> Self {
        let entries = store
            .iter()
            .map(|p| Entry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.data().to_vec(),
            })
            .collect();
        Checkpoint { kind, digest, entries }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: Vec<f32>) {
        self.entries.push(Entry {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))
    }

    /// Copies parameter values into a store built for the same architecture.
    pub fn restore_into(&self, store: &mut ParamStore<f32>) -> Result<()> {
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.name(id).to_string();
            let entry = self.get(&name)?;
            if entry.shape != store.get(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "entry `{name}` has shape {:?}, model expects {:?}",
                    entry.shape,
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = Tensor::new(&entry.shape, entry.data.clone())?;
        }
        Ok(())
    }

    /// Fails with a compatibility error unless kind and digest match.
    pub fn expect(&self, kind: ModelKind, digest: &[u8; 32]) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Compatibility(format!("checkpoint holds {:?}, expected {kind:?}", self.kind)));
        }
        if &self.digest != digest {
            return Err(Error::Compatibility(
                "checkpoint was trained with a different model configuration or channel set".into(),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 1 + 32 + 4 + 4 {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if &body[..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a model checkpoint".into()));
        }
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("CRC mismatch; file is corrupted".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let kind = ModelKind::from_code(r.take(1)?[0])?;
        let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("entry `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("entry too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            entries.push(Entry { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after the last entry".into()));
        }
        Ok(Checkpoint { kind, digest, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
