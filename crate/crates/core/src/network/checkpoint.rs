//! Binary checkpoints: magic, a length-prefixed JSON manifest, then raw
//! little-endian `f64` buffers in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntrinsicNet, NetConfig, NetError};
use crate::fsutil::write_atomic;
use crate::tensor::Shape;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"INTRK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config: NetConfig,
    tensors: Vec<TensorEntry>,
}

impl IntrinsicNet {
    fn named_buffers(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out: Vec<(String, Vec<usize>, Vec<f64>)> = self
            .parameters()
            .into_iter()
            .map(|p| {
                (
                    p.name.clone(),
                    p.value.shape().dims().to_vec(),
                    p.value.data().to_vec(),
                )
            })
            .collect();
        for (prefix, stats) in self.running_stats() {
            out.push((
                format!("{prefix}.running_mean"),
                vec![stats.mean.len()],
                stats.mean.clone(),
            ));
            out.push((
                format!("{prefix}.running_var"),
                vec![stats.var.len()],
                stats.var.clone(),
            ));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let buffers = self.named_buffers();
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tensors: buffers
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                    dtype: "f64le".into(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + json.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &buffers {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let header = CHECKPOINT_MAGIC.len() + 4;
        if bytes.len() < header {
            return Err(NetError::Truncated {
                needed: header,
                found: bytes.len(),
            });
        }
        if &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(NetError::Format("bad magic".into()));
        }
        let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        if bytes.len() < header + len {
            return Err(NetError::Truncated {
                needed: header + len,
                found: bytes.len(),
            });
        }
        let manifest: Manifest = serde_json::from_slice(&bytes[header..header + len])
            .map_err(|e| NetError::Format(format!("manifest: {e}")))?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(NetError::Version {
                found: manifest.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut net = IntrinsicNet::new(manifest.config.clone())?;
        let expected = net.named_buffers();
        if expected.len() != manifest.tensors.len() {
            return Err(NetError::Format(format!(
                "expected {} tensors, found {}",
                expected.len(),
                manifest.tensors.len()
            )));
        }
        let needed = header
            + len
            + manifest
                .tensors
                .iter()
                .map(|t| t.shape.iter().product::<usize>() * 8)
                .sum::<usize>();
        if bytes.len() < needed {
            return Err(NetError::Truncated {
                needed,
                found: bytes.len(),
            });
        }
        if bytes.len() > needed {
            return Err(NetError::Format(format!(
                "{} trailing bytes",
                bytes.len() - needed
            )));
        }

        let mut offset = header + len;
        let mut values = Vec::with_capacity(expected.len());
        for (entry, (name, shape, _)) in manifest.tensors.iter().zip(&expected) {
            if &entry.name != name || &entry.shape != shape || entry.dtype != "f64le" {
                return Err(NetError::Format(format!(
                    "tensor {} {:?} {} does not match expected {name} {shape:?}",
                    entry.name, entry.shape, entry.dtype
                )));
            }
            let n: usize = shape.iter().product();
            let data: Vec<f64> = bytes[offset..offset + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset += 8 * n;
            values.push(data);
        }

        let mut it = values.into_iter();
        for p in net.parameters_mut() {
            let data = it.next().expect("counted");
            let shape = p.value.shape();
            p.value =
                crate::tensor::Tensor::new(Shape::new(shape.n, shape.c, shape.h, shape.w), data)?;
        }
        for stats in net.running_stats_mut() {
            stats.mean = it.next().expect("counted");
            stats.var = it.next().expect("counted");
        }
        Ok(net)
    }

    /// Writes the checkpoint atomically.
    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let bytes = std::fs::read(path)?;
        IntrinsicNet::from_bytes(&bytes)
    }
}
