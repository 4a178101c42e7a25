//! Checkpoint data model and its on-disk format.
//!
//! A run directory holds `manifest.json` plus one `epoch_NNNN.bin` per saved
//! epoch. Each binary file is the concatenation of every learnable layer's
//! weight tensor in layer order, row-major, as little-endian `f32`.

mod arch;
mod io;

pub use arch::{ActShape, ArchitectureSpec, InputShape, LayerKind, LayerSpec, PoolMode};
pub use io::{epoch_file_name, read_run, write_run, Manifest, TensorIndexEntry, MANIFEST_FILE, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f32` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * 4
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub dropout: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochCheckpoint {
    pub epoch: u32,
    /// One tensor per learnable layer, in layer order.
    pub tensors: Vec<Tensor>,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSeries {
    pub run_id: String,
    pub arch: ArchitectureSpec,
    pub hyperparams: Hyperparams,
    pub epochs: Vec<EpochCheckpoint>,
    pub final_accuracy: f64,
    pub early_stop_epoch: u32,
}

impl CheckpointSeries {
    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty()
            || self
                .run_id
                .chars()
                .any(|c| c == '/' || c == '\\' || c.is_control())
        {
            return Err(Error::Validation(format!(
                "run id {:?} is not a usable directory name",
                self.run_id
            )));
        }
        let shapes = self.arch.weight_shapes()?;
        check_fraction("final accuracy", self.final_accuracy)?;
        let mut previous = 0u32;
        for ckpt in &self.epochs {
            if ckpt.epoch <= previous {
                return Err(Error::Validation(format!(
                    "epoch indices must increase strictly from 1; found {} after {}",
                    ckpt.epoch, previous
                )));
            }
            if previous == 0 && ckpt.epoch != 1 {
                return Err(Error::Validation(format!(
                    "first checkpoint is epoch {}, expected 1",
                    ckpt.epoch
                )));
            }
            previous = ckpt.epoch;
            ckpt.validate(&shapes)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self, epoch: u32) -> Option<&EpochCheckpoint> {
        self.epochs.iter().find(|c| c.epoch == epoch)
    }

    /// Bitwise equality of every tensor and exact equality of all metadata.
    pub fn bits_eq(&self, other: &CheckpointSeries) -> bool {
        self.run_id == other.run_id
            && self.arch == other.arch
            && self.hyperparams == other.hyperparams
            && self.final_accuracy.to_bits() == other.final_accuracy.to_bits()
            && self.early_stop_epoch == other.early_stop_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.test_accuracy.to_bits() == b.test_accuracy.to_bits()
                    && a.tensors.len() == b.tensors.len()
                    && a.tensors.iter().zip(&b.tensors).all(|(x, y)| x.bits_eq(y))
            })
    }
}

impl EpochCheckpoint {
    pub(crate) fn validate(&self, shapes: &[(usize, Vec<usize>)]) -> Result<()> {
        check_fraction("test accuracy", self.test_accuracy)?;
        if self.tensors.len() != shapes.len() {
            return Err(Error::Validation(format!(
                "epoch {}: {} tensors for {} learnable layers",
                self.epoch,
                self.tensors.len(),
                shapes.len()
            )));
        }
        for (tensor, (layer_index, shape)) in self.tensors.iter().zip(shapes) {
            if &tensor.shape != shape {
                return Err(Error::Validation(format!(
                    "epoch {}, layer {layer_index}: tensor shape {:?}, architecture expects {shape:?}",
                    self.epoch, tensor.shape
                )));
            }
            if tensor.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Validation(format!(
                    "epoch {}, layer {layer_index}: data length disagrees with shape",
                    self.epoch
                )));
            }
            if let Some(pos) = tensor.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "epoch {}, layer {layer_index}: non-finite value at flat index {pos}",
                    self.epoch
                )));
            }
        }
        Ok(())
    }
}

fn check_fraction(what: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Validation(format!("{what} {value} outside [0, 1]")));
    }
    Ok(())
}
