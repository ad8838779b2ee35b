//! `ParamSet` persistence: `manifest.json` plus one little-endian f64 blob.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::{hex_string, ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dtype: String,
    pub params: Vec<ManifestEntry>,
    /// SHA-256 of the blob.
    pub blob_sha256: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

fn ckpt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn save(dir: &Path, params: &ParamSet, metadata: &BTreeMap<String, String>) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(params.num_scalars() * 8);
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for x in t.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dtype: "f64".into(),
        params: entries,
        blob_sha256: hex_string(&Sha256::digest(&blob)),
        metadata: metadata.clone(),
    };
    fs::write(dir.join(BLOB_FILE), &blob)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let raw = fs::read(&path).map_err(|e| ckpt_err(&path, e.to_string()))?;
    let manifest: Manifest = serde_json::from_slice(&raw)?;
    if manifest.version != FORMAT_VERSION {
        return Err(ckpt_err(&path, format!("unsupported version {}", manifest.version)));
    }
    if manifest.dtype != "f64" {
        return Err(ckpt_err(&path, format!("unsupported dtype {}", manifest.dtype)));
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(ParamSet, Manifest)> {
    let manifest = read_manifest(dir)?;
    let blob_path = dir.join(BLOB_FILE);
    let blob = fs::read(&blob_path).map_err(|e| ckpt_err(&blob_path, e.to_string()))?;
    if hex_string(&Sha256::digest(&blob)) != manifest.blob_sha256 {
        return Err(ckpt_err(&blob_path, "blob hash does not match manifest"));
    }
    let mut params = ParamSet::new();
    for entry in &manifest.params {
        let [rows, cols] = match entry.shape[..] {
            [r, c] => [r, c],
            _ => return Err(ckpt_err(dir, format!("`{}` is not rank 2", entry.name))),
        };
        let start = entry.offset as usize;
        let end = start + rows * cols * 8;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| ckpt_err(&blob_path, format!("`{}` runs past end of blob", entry.name)))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.insert(entry.name.clone(), Tensor::new(rows, cols, data)?)?;
    }
    Ok((params, manifest))
}

/// Loads and checks that names and shapes agree exactly with `expected`.
pub fn load_matching(dir: &Path, expected: &ParamSet) -> Result<(ParamSet, Manifest)> {
    let (params, manifest) = load(dir)?;
    if params.len() != expected.len() {
        return Err(ckpt_err(
            dir,
            format!("{} parameters, expected {}", params.len(), expected.len()),
        ));
    }
    for ((na, ta), (nb, tb)) in params.iter().zip(expected.iter()) {
        if na != nb || ta.shape() != tb.shape() {
            return Err(ckpt_err(
                dir,
                format!("`{na}` {:?} does not match `{nb}` {:?}", ta.shape(), tb.shape()),
            ));
        }
    }
    Ok((params, manifest))
}
