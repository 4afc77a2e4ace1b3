//! Named parameter collections and the on-disk checkpoint format.
//!
//! A checkpoint is two files: `<stem>.json`, a manifest listing every tensor's
//! name, shape and byte offset (plus free-form metadata), and `<stem>.bin`,
//! the concatenated little-endian `f64` payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its slot index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Places every parameter on `tape` as a trainable leaf, in slot order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Like [`bind`](Self::bind) but without gradient tracking.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    pub fn save(&self, stem: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut entries = Vec::with_capacity(self.len());
        let mut blob = Vec::with_capacity(self.numel() * 8);
        for (name, t) in self.names.iter().zip(&self.tensors) {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset: blob.len() as u64,
            });
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT_TAG.to_string(),
            blob_bytes: blob.len() as u64,
            tensors: entries,
            meta: meta.clone(),
        };
        let (json_path, bin_path) = checkpoint_paths(stem);
        write_atomic(&bin_path, &blob)?;
        write_atomic(&json_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(Self, serde_json::Value)> {
        let (json_path, bin_path) = checkpoint_paths(stem);
        let manifest: Manifest = serde_json::from_slice(&fs::read(&json_path)?)?;
        if manifest.format != FORMAT_TAG {
            return Err(TensorError::Checkpoint(format!(
                "unknown format tag {:?}",
                manifest.format
            )));
        }
        let blob = fs::read(&bin_path)?;
        if blob.len() as u64 != manifest.blob_bytes {
            return Err(TensorError::Checkpoint(format!(
                "blob is {} bytes, manifest says {}",
                blob.len(),
                manifest.blob_bytes
            )));
        }
        let mut set = ParamSet::new();
        for e in manifest.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + n * 8;
            let bytes = blob.get(start..end).ok_or_else(|| {
                TensorError::Checkpoint(format!("tensor {} overruns the blob", e.name))
            })?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            set.push(e.name, Tensor::new(e.shape, data)?);
        }
        Ok((set, manifest.meta))
    }
}

const FORMAT_TAG: &str = "bridgeflow-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    blob_bytes: u64,
    tensors: Vec<ManifestEntry>,
    meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `bytes` to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
