//! Binary checkpoint: magic `FCQN`, little-endian u32 format version, u64
//! header length, a JSON header (config and tensor table), then every tensor
//! as little-endian f32 in header order.

use super::network::{QuadNet, Tensor};
use super::real::Real;
use super::{ModelConfig, ModelError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"FCQN";
pub(crate) const FORMAT_VERSION: u32 = 1;
const RUNNING_MEAN: &str = "res.bn.running_mean";
const RUNNING_VAR: &str = "res.bn.running_var";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint payload is {got} bytes, expected {expected}")]
    Length { expected: u64, got: u64 },
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Config(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Decoded checkpoint contents prior to being applied to a network.
struct Decoded {
    config: ModelConfig,
    tensors: Vec<(TensorEntry, Vec<f32>)>,
}

/// 64-bit FNV-1a digest of the checkpoint bytes, as 16 hex digits.
pub fn fingerprint(bytes: &[u8]) -> String {
    let h = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{h:016x}")
}

fn decode(bytes: &[u8]) -> Result<Decoded, CheckpointError> {
    let short = |expected: usize| CheckpointError::Length {
        expected: expected as u64,
        got: bytes.len() as u64,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(short(16));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize.checked_add(header_len).ok_or_else(|| short(usize::MAX))?;
    if bytes.len() < body {
        return Err(short(body));
    }
    let header: Header = serde_json::from_slice(&bytes[16..body])?;
    if header.format_version != version {
        return Err(CheckpointError::UnsupportedVersion(header.format_version));
    }
    let floats: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    let expected = body + 4 * floats;
    if bytes.len() != expected {
        return Err(short(expected));
    }
    let mut at = body;
    let tensors = header
        .tensors
        .into_iter()
        .map(|t| {
            let n: usize = t.shape.iter().product();
            let data = bytes[at..at + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            at += 4 * n;
            (t, data)
        })
        .collect();
    Ok(Decoded {
        config: header.config,
        tensors,
    })
}

impl<T: Real> QuadNet<T> {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut entries: Vec<(String, Vec<usize>, &[T])> = self
            .param_names()
            .iter()
            .zip(&self.params)
            .map(|(n, t)| (n.clone(), t.shape.clone(), t.data.as_slice()))
            .collect();
        let width = self.running_mean.len();
        entries.push((RUNNING_MEAN.into(), vec![width], &self.running_mean));
        entries.push((RUNNING_VAR.into(), vec![width], &self.running_var));
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config().clone(),
            tensors: entries
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &entries {
            for v in data.iter() {
                out.extend_from_slice(&v.as_f32().to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_checkpoint_bytes())?;
        Ok(())
    }

    /// Builds a network from the configuration embedded in the checkpoint.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let decoded = decode(bytes)?;
        let mut net = Self::zeroed(&decoded.config)?;
        net.apply(decoded)?;
        Ok(net)
    }

    pub fn from_checkpoint(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }

    /// Loads weights into this network. Fails, leaving the network
    /// untouched, if the architecture or quad size differ.
    pub fn load_checkpoint_bytes(&mut self, bytes: &[u8]) -> Result<(), CheckpointError> {
        let decoded = decode(bytes)?;
        let (mine, theirs) = (self.config(), &decoded.config);
        if mine.quad_size != theirs.quad_size {
            return Err(CheckpointError::Mismatch(format!(
                "quad_size {} in checkpoint, model has {}",
                theirs.quad_size, mine.quad_size
            )));
        }
        let arch = |c: &ModelConfig| {
            (
                c.input_size,
                c.conv_filters.clone(),
                c.conv_kernels.clone(),
                c.conv_strides.clone(),
                c.resnet_width,
                c.fc_widths.clone(),
                c.recurrent_width,
            )
        };
        if arch(mine) != arch(theirs) {
            return Err(CheckpointError::Mismatch("layer widths differ".into()));
        }
        self.apply(decoded)
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<(), CheckpointError> {
        self.load_checkpoint_bytes(&std::fs::read(path)?)
    }

    /// Validates every tensor before assigning any.
    fn apply(&mut self, decoded: Decoded) -> Result<(), CheckpointError> {
        let n = self.params.len();
        if decoded.tensors.len() != n + 2 {
            return Err(CheckpointError::Mismatch(format!(
                "{} tensors in checkpoint, model has {}",
                decoded.tensors.len(),
                n + 2
            )));
        }
        let width = self.running_mean.len();
        let expected: Vec<(&str, Vec<usize>)> = self
            .param_names()
            .iter()
            .map(String::as_str)
            .zip(self.params.iter().map(|t| t.shape.clone()))
            .chain([(RUNNING_MEAN, vec![width]), (RUNNING_VAR, vec![width])])
            .collect();
        for ((entry, _), (name, shape)) in decoded.tensors.iter().zip(&expected) {
            if entry.name != *name || entry.shape != *shape {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor {} {:?} where {} {:?} was expected",
                    entry.name, entry.shape, name, shape
                )));
            }
        }
        let conv = |d: Vec<f32>| d.into_iter().map(|v| T::from_f64(f64::from(v))).collect::<Vec<T>>();
        let mut it = decoded.tensors.into_iter();
        for p in self.params.iter_mut() {
            let (entry, data) = it.next().expect("count checked");
            *p = Tensor {
                shape: entry.shape,
                data: conv(data),
            };
        }
        self.running_mean = conv(it.next().expect("count checked").1);
        self.running_var = conv(it.next().expect("count checked").1);
        Ok(())
    }
}
