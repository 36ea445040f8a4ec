use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DualHeadModel, EncoderConfig, Tensors};
use crate::error::{Error, Result};
use crate::io;
use crate::textres::SubwordVocab;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    /// Model role, e.g. "dsim" or "qsim".
    pub kind: String,
    pub dtype: String,
    pub config: EncoderConfig,
    pub tensors: Vec<TensorEntry>,
    pub vocab: SubwordVocab,
    pub seed: u64,
    pub step: u64,
    pub fingerprint: String,
}

/// A model plus everything needed to use or resume it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub model: DualHeadModel<f32>,
    pub vocab: SubwordVocab,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    fn blob(&self) -> Vec<f32> {
        self.model
            .tensors()
            .iter()
            .flat_map(|(_, _, d)| d.iter().copied())
            .collect()
    }

    /// Digest of the tensor blob; indexes record it.
    pub fn fingerprint(&self) -> String {
        io::fingerprint(&io::f32_to_le_bytes(&self.blob()))
    }
}

/// Writes the manifest to `path` and the tensor blob next to it (`.bin`).
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let blob = ckpt.blob();
    let bytes = io::f32_to_le_bytes(&blob);
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        kind: ckpt.kind.clone(),
        dtype: "f32".into(),
        config: ckpt.model.config.clone(),
        tensors: ckpt
            .model
            .tensors()
            .into_iter()
            .map(|(name, shape, _)| TensorEntry { name, shape })
            .collect(),
        vocab: ckpt.vocab.clone(),
        seed: ckpt.seed,
        step: ckpt.step,
        fingerprint: io::fingerprint(&bytes),
    };
    io::write_json(path, &manifest)?;
    std::fs::write(io::blob_path(path), bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut manifest: CheckpointManifest = io::read_json(path)?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unknown format version {} (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.dtype != "f32" {
        return Err(Error::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
    }
    manifest.vocab.reindex();
    let bytes = io::read_blob(io::blob_path(path))?;
    let values = io::le_bytes_to_f32(&bytes);
    let mut model = DualHeadModel::<f32>::init(manifest.config.clone(), 0)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if name != &entry.name || shape != &entry.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, config implies {name} {shape:?}",
                entry.name, entry.shape
            )));
        }
    }
    let mut offset = 0usize;
    for (slot, entry) in model.tensors_mut().into_iter().zip(&manifest.tensors) {
        let n = slot.len();
        if offset + n > values.len() || bytes.len() % 4 != 0 {
            return Err(Error::Checkpoint(format!(
                "blob truncated: tensor {} needs elements {}..{} but blob has {}",
                entry.name,
                offset,
                offset + n,
                values.len()
            )));
        }
        slot.copy_from_slice(&values[offset..offset + n]);
        offset += n;
    }
    if offset != values.len() {
        return Err(Error::Checkpoint(format!(
            "blob has {} trailing elements",
            values.len() - offset
        )));
    }
    Ok(Checkpoint {
        kind: manifest.kind,
        model,
        vocab: manifest.vocab,
        seed: manifest.seed,
        step: manifest.step,
    })
}
