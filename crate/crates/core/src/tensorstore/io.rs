use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, CheckpointSeries, EpochCheckpoint, Hyperparams, Tensor};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorIndexEntry {
    pub layer_index: usize,
    pub shape: Vec<usize>,
    pub byte_offset: usize,
    pub byte_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochIndex {
    pub epoch: u32,
    pub file: String,
    pub tensors: Vec<TensorIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub run_id: String,
    pub arch: ArchitectureSpec,
    pub hyperparams: Hyperparams,
    pub per_epoch_accuracy: Vec<f64>,
    pub final_accuracy: f64,
    pub early_stop_epoch: u32,
    pub tensor_index: Vec<EpochIndex>,
}

pub fn epoch_file_name(epoch: u32) -> String {
    format!("epoch_{epoch:04}.bin")
}

impl Manifest {
    fn for_series(series: &CheckpointSeries) -> Result<Self> {
        let shapes = series.arch.weight_shapes()?;
        let tensor_index = series
            .epochs
            .iter()
            .map(|ckpt| {
                let mut offset = 0;
                let tensors = shapes
                    .iter()
                    .zip(&ckpt.tensors)
                    .map(|((layer_index, _), t)| {
                        let entry = TensorIndexEntry {
                            layer_index: *layer_index,
                            shape: t.shape.clone(),
                            byte_offset: offset,
                            byte_length: t.byte_len(),
                        };
                        offset += t.byte_len();
                        entry
                    })
                    .collect();
                EpochIndex {
                    epoch: ckpt.epoch,
                    file: epoch_file_name(ckpt.epoch),
                    tensors,
                }
            })
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            run_id: series.run_id.clone(),
            arch: series.arch.clone(),
            hyperparams: series.hyperparams,
            per_epoch_accuracy: series.epochs.iter().map(|c| c.test_accuracy).collect(),
            final_accuracy: series.final_accuracy,
            early_stop_epoch: series.early_stop_epoch,
            tensor_index,
        })
    }

    pub fn load(directory: &Path) -> Result<Self> {
        let path = directory.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path,
            message: e.to_string(),
        })
    }
}

/// Writes `series` into `directory` (created if missing). The series is
/// validated first; nothing is written if validation fails.
pub fn write_run(series: &CheckpointSeries, directory: &Path) -> Result<()> {
    series.validate()?;
    let manifest = Manifest::for_series(series)?;
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    for (ckpt, index) in series.epochs.iter().zip(&manifest.tensor_index) {
        let total: usize = ckpt.tensors.iter().map(Tensor::byte_len).sum();
        let mut bytes = Vec::with_capacity(total);
        for tensor in &ckpt.tensors {
            for v in &tensor.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let path = directory.join(&index.file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    }
    let path = directory.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Reads and fully validates a run directory.
pub fn read_run(directory: &Path) -> Result<CheckpointSeries> {
    let manifest = Manifest::load(directory)?;
    let manifest_path = directory.join(MANIFEST_FILE);
    let malformed = |message: String| Error::Manifest {
        path: manifest_path.clone(),
        message,
    };
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(malformed(format!(
            "unsupported schema version {}",
            manifest.schema_version
        )));
    }
    if manifest.per_epoch_accuracy.len() != manifest.tensor_index.len() {
        return Err(malformed(format!(
            "{} accuracies for {} indexed epochs",
            manifest.per_epoch_accuracy.len(),
            manifest.tensor_index.len()
        )));
    }

    let on_disk = count_epoch_files(directory)?;
    if on_disk != manifest.tensor_index.len() {
        return Err(Error::Structure(format!(
            "manifest lists {} epochs but {} contains {on_disk} epoch files",
            manifest.tensor_index.len(),
            directory.display()
        )));
    }

    let shapes = manifest.arch.weight_shapes()?;
    let mut epochs = Vec::with_capacity(manifest.tensor_index.len());
    for (index, &accuracy) in manifest.tensor_index.iter().zip(&manifest.per_epoch_accuracy) {
        if index.tensors.len() != shapes.len() {
            return Err(malformed(format!(
                "epoch {} indexes {} tensors, architecture has {} learnable layers",
                index.epoch,
                index.tensors.len(),
                shapes.len()
            )));
        }
        let path = directory.join(&index.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut expected_offset = 0;
        let mut tensors = Vec::with_capacity(shapes.len());
        for (entry, (layer_index, shape)) in index.tensors.iter().zip(&shapes) {
            if entry.layer_index != *layer_index || &entry.shape != shape {
                return Err(Error::Structure(format!(
                    "epoch {}: index entry (layer {}, shape {:?}) disagrees with architecture (layer {layer_index}, shape {shape:?})",
                    index.epoch, entry.layer_index, entry.shape
                )));
            }
            let expected_len = shape.iter().product::<usize>() * 4;
            if entry.byte_length != expected_len || entry.byte_offset != expected_offset {
                return Err(Error::Structure(format!(
                    "epoch {}, layer {layer_index}: byte range {}+{} does not match shape (expected {expected_offset}+{expected_len})",
                    index.epoch, entry.byte_offset, entry.byte_length
                )));
            }
            let end = entry.byte_offset + entry.byte_length;
            if bytes.len() < end {
                return Err(Error::LengthMismatch {
                    path: path.clone(),
                    layer_index: *layer_index,
                    expected: entry.byte_length,
                    found: bytes.len().saturating_sub(entry.byte_offset),
                });
            }
            let data = bytes[entry.byte_offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor {
                shape: shape.clone(),
                data,
            });
            expected_offset = end;
        }
        if bytes.len() != expected_offset {
            let layer_index = shapes.last().map(|(i, _)| *i).unwrap_or(0);
            return Err(Error::LengthMismatch {
                path,
                layer_index,
                expected: expected_offset,
                found: bytes.len(),
            });
        }
        epochs.push(EpochCheckpoint {
            epoch: index.epoch,
            tensors,
            test_accuracy: accuracy,
        });
    }

    let series = CheckpointSeries {
        run_id: manifest.run_id,
        arch: manifest.arch,
        hyperparams: manifest.hyperparams,
        epochs,
        final_accuracy: manifest.final_accuracy,
        early_stop_epoch: manifest.early_stop_epoch,
    };
    series.validate()?;
    Ok(series)
}

fn count_epoch_files(directory: &Path) -> Result<usize> {
    let entries = fs::read_dir(directory).map_err(|e| Error::io(directory, e))?;
    let mut count = 0;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(directory, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("epoch_") && name.ends_with(".bin") {
            count += 1;
        }
    }
    Ok(count)
}
