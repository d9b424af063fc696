//! Binary checkpoint container.
//!
//! Layout: the magic bytes `WCKPT1\n`, a little-endian `u64` header length,
//! the JSON header, then every parameter as raw little-endian `f64` values in
//! header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 7] = b"WCKPT1\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Model kind: `ar`, `nar`, `cvae` or `upsampler`.
    pub kind: String,
    pub config: serde_json::Value,
    pub params: Vec<ParamSpec>,
    pub seed: u64,
    pub step: u64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(
        kind: &str,
        config: serde_json::Value,
        store: &ParamStore,
        seed: u64,
        step: u64,
    ) -> Self {
        let tensors: Vec<(String, Tensor)> = store
            .named()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        let params = tensors
            .iter()
            .map(|(n, t)| ParamSpec {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                kind: kind.to_string(),
                config,
                params,
                seed,
                step,
            },
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(
            MAGIC.len() + 8 + header.len() + 8 * self.tensors.iter().map(|(_, t)| t.numel()).sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing WCKPT1 magic"));
        }
        let mut off = MAGIC.len();
        let len = u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes")) as usize;
        off += 8;
        let header_bytes = bytes
            .get(off..off + len)
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes)?;
        off += len;
        let mut tensors = Vec::with_capacity(header.params.len());
        for spec in &header.params {
            let n: usize = spec.shape.iter().product();
            let raw = bytes
                .get(off..off + 8 * n)
                .ok_or_else(|| bad(&format!("truncated data for `{}`", spec.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((spec.name.clone(), Tensor::new(spec.shape.clone(), data)?));
            off += 8 * n;
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes after parameter data"));
        }
        Ok(Checkpoint { header, tensors })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::matrix(2, 2, vec![1.0, -2.5, 3.25, 1e-300]).unwrap());
        store.add("b", Tensor::row_vector(vec![0.1]));
        let ck = Checkpoint::from_store("nar", serde_json::json!({"d_model": 8}), &store, 7, 3);
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..7], b"WCKPT1\n");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.header, ck.header);
        assert_eq!(back.tensors[0].1, store.values()[0]);
        let mut other = store.clone();
        other.zero_prefix("");
        other.load_named(back.tensors).unwrap();
        assert_eq!(other.values(), store.values());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[3]));
        let mut bytes = Checkpoint::from_store("nar", serde_json::Value::Null, &store, 0, 0)
            .to_bytes()
            .unwrap();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
