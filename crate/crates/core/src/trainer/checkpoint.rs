//! Binary checkpoint container shared by both GAN trainers.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "LSCKPT\0\x01" (format version 1)
//! kind         u32 len + UTF-8       e.g. "pix2pixhd", "pgan"
//! fingerprint  32 bytes              SHA-256 of the canonical config
//! epoch        u64                   completed epochs
//! config       u32 len + UTF-8 JSON  full config that produced the weights
//! counters     u32 count, then per counter: u32 len + UTF-8 name, u64 value
//! tensors      u32 count, then per tensor:
//!                u32 len + UTF-8 name
//!                u32 ndim, ndim × u64 dims
//!                prod(dims) × f32 data
//! ```
//!
//! Entries are written in the order they are stored, so a load followed by a
//! save reproduces the file byte for byte.

use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::synthnet::nn::to_f32_vec;
use crate::synthnet::ParamStore;

const MAGIC: &[u8; 8] = b"LSCKPT\0\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            dims: t.dims().to_vec(),
            data: to_f32_vec(t)?,
        })
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::from_vec(
            self.data.clone(),
            self.dims.as_slice(),
            &Device::Cpu,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub fingerprint: [u8; 32],
    pub epoch: u64,
    pub config_json: String,
    pub counters: Vec<(String, u64)>,
    pub tensors: Vec<NamedArray>,
}

/// SHA-256 over the compact JSON form of `value`. `serde_json` objects keep
/// keys sorted, which makes the encoding canonical.
pub fn fingerprint_of<T: Serialize>(value: &T) -> Result<[u8; 32]> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    Ok(Sha256::digest(canonical.as_bytes()).into())
}

pub fn fingerprint_hex(fp: &[u8; 32]) -> String {
    hex::encode(fp)
}

impl Checkpoint {
    pub fn fingerprint_hex(&self) -> String {
        fingerprint_hex(&self.fingerprint)
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedArray> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn counter(&self, name: &str) -> Option<u64> {
        self.counters
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    /// Appends every parameter of `params` under its own name.
    pub fn push_params(&mut self, params: &ParamStore) -> Result<()> {
        for (name, var) in params.iter() {
            self.tensors
                .push(NamedArray::from_tensor(name, var.as_tensor())?);
        }
        Ok(())
    }

    /// Overwrites every parameter of `params` with the stored array of the
    /// same name and shape.
    pub fn restore_params(&self, params: &ParamStore) -> Result<()> {
        for (name, var) in params.iter() {
            let arr = self
                .tensor(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if arr.dims != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    arr.dims,
                    var.dims()
                )));
            }
            var.set(&arr.to_tensor()?)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        put_str(&mut out, &self.config_json);
        out.extend_from_slice(&(self.counters.len() as u32).to_le_bytes());
        for (name, value) in &self.counters {
            put_str(&mut out, name);
            out.extend_from_slice(&value.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic or unsupported version".into()));
        }
        let kind = r.string()?;
        let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let epoch = r.u64()?;
        let config_json = r.string()?;
        let n_counters = r.u32()? as usize;
        let mut counters = Vec::with_capacity(n_counters.min(1 << 16));
        for _ in 0..n_counters {
            counters.push((r.string()?, r.u64()?));
        }
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors.min(1 << 16));
        for _ in 0..n_tensors {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
            let raw = r.take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(NamedArray { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            kind,
            fingerprint,
            epoch,
            config_json,
            counters,
            tensors,
        })
    }

    /// Atomic write (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.display().to_string()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// File name used for the checkpoint written after `epoch` epochs.
    pub fn file_name(epoch: u64) -> String {
        format!("epoch_{epoch:04}.ckpt")
    }

    /// The checkpoint with the highest epoch number in `dir`, if any.
    pub fn latest_in(dir: &Path) -> Result<Option<PathBuf>> {
        if !dir.exists() {
            return Ok(None);
        }
        let mut best: Option<(u64, PathBuf)> = None;
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let epoch = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("epoch_"))
                .and_then(|n| n.strip_suffix(".ckpt"))
                .and_then(|n| n.parse::<u64>().ok());
            if let Some(e) = epoch {
                if best.as_ref().is_none_or(|(b, _)| e > *b) {
                    best = Some((e, path));
                }
            }
        }
        Ok(best.map(|(_, p)| p))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            kind: "pix2pixhd".into(),
            fingerprint: [7; 32],
            epoch: 3,
            config_json: "{\"a\":1}".into(),
            counters: vec![("opt_g.step".into(), 12)],
            tensors: vec![NamedArray {
                name: "w".into(),
                dims: vec![2, 1],
                data: vec![1.5, -0.0],
            }],
        }
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = Checkpoint::load(Path::new("/nonexistent/x.ckpt")).unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint(_)));
    }

    #[test]
    fn fingerprint_ignores_key_order() {
        let a = serde_json::json!({"x": 1, "y": [1, 2]});
        let b: serde_json::Value = serde_json::from_str(r#"{"y":[1,2],"x":1}"#).unwrap();
        assert_eq!(fingerprint_of(&a).unwrap(), fingerprint_of(&b).unwrap());
    }

    proptest! {
        #[test]
        fn bytes_roundtrip_exactly(
            data in prop::collection::vec(any::<u32>(), 0..40),
            epoch in any::<u64>(),
            name in "[a-z.]{1,12}",
        ) {
            let floats: Vec<f32> = data.iter().map(|&b| f32::from_bits(b)).collect();
            let ck = Checkpoint {
                kind: "k".into(),
                fingerprint: [1; 32],
                epoch,
                config_json: "{}".into(),
                counters: vec![(name.clone(), epoch)],
                tensors: vec![NamedArray { name, dims: vec![floats.len()], data: floats }],
            };
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
