//! Binary checkpoint format.
//!
//! ```text
//! "TSCA1" | header length (u32 LE) | JSON header | f32 LE payload
//! ```
//!
//! The header maps every tensor name to its shape and byte offset within the
//! payload (contiguous, in canonical tensor order) and echoes the encoder
//! configuration and training provenance.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{CheckpointError, Error, Result};
use crate::training::{Checkpoint, Provenance};

pub const MAGIC: &[u8; 5] = b"TSCA1";
const PREFIX: usize = MAGIC.len() + 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub tensors: IndexMap<String, TensorEntry>,
    pub encoder: EncoderConfig,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub provenance: Provenance,
}

fn header_of(ckpt: &Checkpoint) -> CheckpointHeader {
    let mut offset = 0u64;
    let tensors = ckpt
        .params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| {
            let entry = TensorEntry {
                shape: t.shape.clone(),
                offset,
            };
            offset += 4 * t.len() as u64;
            (name, entry)
        })
        .collect();
    CheckpointHeader {
        tensors,
        encoder: ckpt.params.config.clone(),
        seed: ckpt.provenance.seed,
        epochs: ckpt.provenance.epochs_run,
        final_loss: ckpt.provenance.final_loss,
        provenance: ckpt.provenance.clone(),
    }
}

/// Serializes a checkpoint. Values are stored as `f32`; parameters produced
/// by this crate already live on the `f32` grid, so they round-trip exactly.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_of(ckpt))?;
    let header_len =
        u32::try_from(header.len()).map_err(|_| Error::arg("checkpoint header exceeds 4 GiB"))?;
    let payload_len: usize = ckpt
        .params
        .named_tensors()
        .iter()
        .map(|(_, t)| 4 * t.len())
        .sum();
    let mut out = Vec::with_capacity(PREFIX + header.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in ckpt.params.named_tensors() {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads and validates the prefix and JSON header only.
pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize), CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: bytes[..bytes.len().min(MAGIC.len())].to_vec(),
        });
    }
    if bytes.len() < PREFIX {
        return Err(CheckpointError::Truncated {
            field: "header length",
            expected: PREFIX as u64,
            actual: bytes.len() as u64,
        });
    }
    let header_len = u32::from_le_bytes(bytes[MAGIC.len()..PREFIX].try_into().unwrap()) as usize;
    let header_end = PREFIX + header_len;
    if bytes.len() < header_end {
        return Err(CheckpointError::Truncated {
            field: "header",
            expected: header_end as u64,
            actual: bytes.len() as u64,
        });
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[PREFIX..header_end]).map_err(|e| {
            CheckpointError::Header {
                field: "header".into(),
                message: e.to_string(),
            }
        })?;
    Ok((header, header_end))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let (header, payload_start) = decode_header(bytes)?;
    header
        .encoder
        .validate()
        .map_err(|e| CheckpointError::Header {
            field: "encoder".into(),
            message: e.to_string(),
        })?;
    let mut params = EncoderParams::zeros(&header.encoder);
    let expected_names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    if let Some(extra) = header.tensors.keys().find(|k| !expected_names.contains(k)) {
        return Err(CheckpointError::Header {
            field: format!("tensors.{extra}"),
            message: "unknown tensor".into(),
        });
    }

    let mut offset = 0u64;
    let mut layout = Vec::with_capacity(expected_names.len());
    for (name, t) in params.named_tensors() {
        let entry = header
            .tensors
            .get(&name)
            .ok_or_else(|| CheckpointError::Header {
                field: format!("tensors.{name}"),
                message: "missing tensor".into(),
            })?;
        if entry.shape != t.shape {
            return Err(CheckpointError::ShapeMismatch {
                tensor: name,
                expected: t.shape.clone(),
                found: entry.shape.clone(),
            });
        }
        if entry.offset != offset {
            return Err(CheckpointError::OffsetMismatch {
                tensor: name,
                expected: offset,
                found: entry.offset,
            });
        }
        layout.push(offset as usize);
        offset += 4 * t.len() as u64;
    }
    let actual = (bytes.len() - payload_start) as u64;
    if actual != offset {
        return Err(CheckpointError::Truncated {
            field: "payload",
            expected: offset,
            actual,
        });
    }
    let payload = &bytes[payload_start..];
    for (t, start) in params.tensors_mut().into_iter().zip(layout) {
        for (j, v) in t.data.iter_mut().enumerate() {
            let at = start + 4 * j;
            *v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap()) as f64;
        }
    }
    Ok(Checkpoint {
        params,
        provenance: header.provenance,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_checkpoint(&bytes)?)
}
