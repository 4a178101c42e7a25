//! Static network skeleton and forward shape algebra.
//!
//! Only valid (stride 1, no padding) convolutions and exact-division average
//! pooling are modeled, so every output shape has a closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
    },
    Pool {
        window: usize,
        mode: PoolMode,
    },
    Fc {
        out_dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Fraction of units dropped during training; ignored at inference.
    #[serde(default)]
    pub dropout: f64,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            kind: LayerKind::Conv {
                filters,
                kernel_h,
                kernel_w,
            },
            dropout: 0.0,
        }
    }

    pub fn avg_pool(window: usize) -> Self {
        Self {
            kind: LayerKind::Pool {
                window,
                mode: PoolMode::Average,
            },
            dropout: 0.0,
        }
    }

    pub fn fc(out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Fc { out_dim },
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    pub fn is_learnable(&self) -> bool {
        !matches!(self.kind, LayerKind::Pool { .. })
    }
}

/// Shape of the activation flowing between two layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActShape {
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl ActShape {
    pub fn len(&self) -> usize {
        match *self {
            ActShape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
            ActShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of channels seen by a following layer (flat vectors count as one
    /// channel per element).
    pub fn channels(&self) -> usize {
        match *self {
            ActShape::Spatial { channels, .. } => channels,
            ActShape::Flat(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_shape: InputShape,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn new(input_shape: InputShape, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_shape,
            layers,
        }
    }

    /// LeNet-5 with valid convolutions and 2×2 average pooling.
    pub fn lenet5(input_shape: InputShape, classes: usize) -> Self {
        Self::new(
            input_shape,
            vec![
                LayerSpec::conv(6, 5, 5),
                LayerSpec::avg_pool(2),
                LayerSpec::conv(16, 5, 5),
                LayerSpec::avg_pool(2),
                LayerSpec::fc(120),
                LayerSpec::fc(84),
                LayerSpec::fc(classes),
            ],
        )
    }

    /// Small two-conv, two-fc network used for the synthetic corpus.
    pub fn toy(input_shape: InputShape, classes: usize) -> Self {
        Self::new(
            input_shape,
            vec![
                LayerSpec::conv(8, 3, 3),
                LayerSpec::avg_pool(2),
                LayerSpec::conv(16, 3, 3),
                LayerSpec::fc(32),
                LayerSpec::fc(classes),
            ],
        )
    }

    /// Forward shape propagation. Element 0 is the input, element `i + 1` the
    /// output of layer `i`.
    pub fn propagate(&self) -> Result<Vec<ActShape>> {
        let InputShape {
            channels,
            height,
            width,
        } = self.input_shape;
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "input shape {channels}x{height}x{width} has a zero dimension"
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut current = ActShape::Spatial {
            channels,
            height,
            width,
        };
        shapes.push(current);
        for (index, layer) in self.layers.iter().enumerate() {
            if !(0.0..1.0).contains(&layer.dropout) {
                return Err(Error::Shape(format!(
                    "layer {index}: dropout {} outside [0, 1)",
                    layer.dropout
                )));
            }
            current = match (layer.kind, current) {
                (
                    LayerKind::Conv {
                        filters,
                        kernel_h,
                        kernel_w,
                    },
                    ActShape::Spatial {
                        height, width, ..
                    },
                ) => {
                    if filters == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(Error::Shape(format!(
                            "layer {index}: conv needs at least one filter and a nonempty kernel"
                        )));
                    }
                    if kernel_h > height || kernel_w > width {
                        return Err(Error::Shape(format!(
                            "layer {index}: kernel {kernel_h}x{kernel_w} larger than input {height}x{width}"
                        )));
                    }
                    ActShape::Spatial {
                        channels: filters,
                        height: height - kernel_h + 1,
                        width: width - kernel_w + 1,
                    }
                }
                (
                    LayerKind::Pool { window, .. },
                    ActShape::Spatial {
                        channels,
                        height,
                        width,
                    },
                ) => {
                    if window == 0 || height % window != 0 || width % window != 0 {
                        return Err(Error::Shape(format!(
                            "layer {index}: pool window {window} does not divide {height}x{width}"
                        )));
                    }
                    ActShape::Spatial {
                        channels,
                        height: height / window,
                        width: width / window,
                    }
                }
                (LayerKind::Fc { out_dim }, _) => {
                    if out_dim == 0 {
                        return Err(Error::Shape(format!("layer {index}: fc with zero outputs")));
                    }
                    ActShape::Flat(out_dim)
                }
                (LayerKind::Conv { .. } | LayerKind::Pool { .. }, ActShape::Flat(_)) => {
                    return Err(Error::Shape(format!(
                        "layer {index}: spatial layer after a fully-connected layer"
                    )));
                }
            };
            shapes.push(current);
        }
        Ok(shapes)
    }

    /// Indices (into `layers`) of the layers that carry a weight tensor.
    pub fn learnable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_learnable())
            .map(|(i, _)| i)
            .collect()
    }

    /// Weight tensor shape per learnable layer: conv `[f, c, kh, kw]`, fc `[d_in, d_out]`.
    pub fn weight_shapes(&self) -> Result<Vec<(usize, Vec<usize>)>> {
        let shapes = self.propagate()?;
        let mut out = Vec::new();
        for (index, layer) in self.layers.iter().enumerate() {
            let input = shapes[index];
            match layer.kind {
                LayerKind::Conv {
                    filters,
                    kernel_h,
                    kernel_w,
                } => out.push((index, vec![filters, input.channels(), kernel_h, kernel_w])),
                LayerKind::Fc { out_dim } => out.push((index, vec![input.len(), out_dim])),
                LayerKind::Pool { .. } => {}
            }
        }
        Ok(out)
    }

    pub fn has_conv(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Conv { .. }))
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .weight_shapes()?
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum())
    }
}
