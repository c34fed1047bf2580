//! Plain dense-model interchange: a JSON manifest describing tensor names,
//! shapes, dtypes and blob offsets, next to a raw blob of little-endian
//! 32-bit floats in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::quant::{LayerKind, Tensor, TensorMeta};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    version: u32,
    blob: String,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    byte_len: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<LayerKind>,
}

/// A dense model: named tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseModel {
    pub tensors: Vec<(TensorMeta, Tensor)>,
}

impl DenseModel {
    pub fn push(&mut self, meta: TensorMeta, tensor: Tensor) {
        self.tensors.push((meta, tensor));
    }
}

/// Write `manifest_path` (JSON) plus a `.bin` blob next to it holding all
/// tensor data as little-endian f32, concatenated in manifest order.
pub fn write_dense_model(manifest_path: &Path, model: &DenseModel) -> Result<(), FormatError> {
    let blob_path = manifest_path.with_extension("bin");
    let blob_name = blob_path
        .file_name()
        .ok_or_else(|| FormatError::Malformed("manifest path has no file name".into()))?
        .to_string_lossy()
        .into_owned();

    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::with_capacity(model.tensors.len());
    for (meta, tensor) in &model.tensors {
        if meta.shape != tensor.shape {
            return Err(FormatError::Malformed(format!(
                "tensor {}: meta shape {:?} != data shape {:?}",
                meta.name, meta.shape, tensor.shape
            )));
        }
        let offset = blob.len() as u64;
        for &v in &tensor.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ManifestEntry {
            name: meta.name.clone(),
            shape: meta.shape.clone(),
            dtype: "f32".into(),
            offset,
            byte_len: (tensor.data.len() * 4) as u64,
            kind: Some(meta.layer_kind),
        });
    }
    let manifest = ManifestFile { version: MANIFEST_VERSION, blob: blob_name, tensors: entries };
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    fs::write(blob_path, blob)?;
    Ok(())
}

/// Read a manifest+blob pair written by [`write_dense_model`] (or any tool
/// following the same layout).
pub fn read_dense_model(manifest_path: &Path) -> Result<DenseModel, FormatError> {
    let manifest: ManifestFile = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(FormatError::Malformed(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let blob_path = manifest_path
        .parent()
        .map(|d| d.join(&manifest.blob))
        .unwrap_or_else(|| manifest.blob.clone().into());
    let blob = fs::read(blob_path)?;

    let mut model = DenseModel::default();
    for entry in manifest.tensors {
        if entry.dtype != "f32" {
            return Err(FormatError::Malformed(format!(
                "tensor {}: unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.byte_len as usize;
        if end > blob.len() {
            return Err(FormatError::Malformed(format!(
                "tensor {}: blob range {start}..{end} exceeds blob of {} bytes",
                entry.name,
                blob.len()
            )));
        }
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data)?;
        let meta = TensorMeta {
            name: entry.name,
            shape: entry.shape,
            layer_kind: entry.kind.unwrap_or_else(|| LayerKind::infer(&tensor.shape)),
        };
        model.push(meta, tensor);
    }
    Ok(model)
}
