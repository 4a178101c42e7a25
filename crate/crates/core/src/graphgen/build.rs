use super::{Edge, LayeredGraph, Norm, Representation};
use crate::error::{Error, Result};
use crate::tensorstore::{ActShape, ArchitectureSpec, EpochCheckpoint, LayerKind, Tensor};

pub const DEFAULT_UNROLLED_NODE_CEILING: usize = 5_000_000;

/// Dispatches to the builder for `representation`.
pub fn build_graph(
    ckpt: &EpochCheckpoint,
    arch: &ArchitectureSpec,
    representation: Representation,
    norm: Norm,
) -> Result<LayeredGraph> {
    match representation {
        Representation::Fc => build_fc_graph(ckpt, arch),
        Representation::Rolled => build_rolled_graph(ckpt, arch, norm),
        Representation::Unrolled => build_unrolled_graph(ckpt, arch),
    }
}

/// Pairs every layer with its weight tensor (pool layers get `None`) after
/// checking the checkpoint against the architecture.
fn layer_tensors<'a>(
    ckpt: &'a EpochCheckpoint,
    arch: &ArchitectureSpec,
) -> Result<(Vec<ActShape>, Vec<Option<&'a Tensor>>)> {
    let shapes = arch.propagate()?;
    let weight_shapes = arch.weight_shapes()?;
    ckpt.validate(&weight_shapes)?;
    let mut tensors = ckpt.tensors.iter();
    let per_layer = arch
        .layers
        .iter()
        .map(|l| if l.is_learnable() { tensors.next() } else { None })
        .collect();
    Ok((shapes, per_layer))
}

fn node_id(n: usize) -> u32 {
    debug_assert!(n <= u32::MAX as usize);
    n as u32
}

pub fn build_fc_graph(ckpt: &EpochCheckpoint, arch: &ArchitectureSpec) -> Result<LayeredGraph> {
    if let Some(i) = arch
        .layers
        .iter()
        .position(|l| !matches!(l.kind, LayerKind::Fc { .. }))
    {
        return Err(Error::UnsupportedRepresentation(format!(
            "fc representation needs an all-fc architecture; layer {i} is not fully connected"
        )));
    }
    let (shapes, tensors) = layer_tensors(ckpt, arch)?;
    let partitions: Vec<usize> = shapes.iter().map(ActShape::len).collect();
    let edge_total: usize = partitions.windows(2).map(|w| w[0] * w[1]).sum();
    let mut edges = Vec::with_capacity(edge_total);
    let mut offset = 0;
    for (index, tensor) in tensors.iter().enumerate() {
        let w = tensor.expect("fc layers are learnable");
        let (d_in, d_out) = (partitions[index], partitions[index + 1]);
        push_dense(&mut edges, w, offset, offset + d_in, d_in, d_out, |x| x);
        offset += d_in;
    }
    Ok(LayeredGraph {
        partitions,
        edges,
        representation: Representation::Fc,
    })
}

fn push_dense(
    edges: &mut Vec<Edge>,
    w: &Tensor,
    in_offset: usize,
    out_offset: usize,
    d_in: usize,
    d_out: usize,
    map: impl Fn(f64) -> f64,
) {
    for i in 0..d_in {
        let row = &w.data[i * d_out..(i + 1) * d_out];
        for (j, &x) in row.iter().enumerate() {
            edges.push(Edge {
                u: node_id(in_offset + i),
                v: node_id(out_offset + j),
                weight: map(x as f64),
            });
        }
    }
}

pub fn build_rolled_graph(
    ckpt: &EpochCheckpoint,
    arch: &ArchitectureSpec,
    norm: Norm,
) -> Result<LayeredGraph> {
    let (shapes, tensors) = layer_tensors(ckpt, arch)?;
    let mut partitions = vec![arch.input_shape.channels];
    let mut edges = Vec::new();
    // first node id of the most recent partition
    let mut prev_offset = 0usize;

    for (index, layer) in arch.layers.iter().enumerate() {
        let input = shapes[index];
        let prev_size = *partitions.last().expect("input partition");
        let next_offset = prev_offset + prev_size;
        match layer.kind {
            LayerKind::Pool { .. } => continue,
            LayerKind::Conv {
                filters,
                kernel_h,
                kernel_w,
            } => {
                let k = tensors[index].expect("conv layers are learnable");
                let channels = input.channels();
                if channels != prev_size {
                    return Err(Error::Shape(format!(
                        "layer {index}: conv sees {channels} channels but the previous partition has {prev_size} nodes"
                    )));
                }
                let area = kernel_h * kernel_w;
                for c in 0..channels {
                    for f in 0..filters {
                        let start = (f * channels + c) * area;
                        let slice = &k.data[start..start + area];
                        edges.push(Edge {
                            u: node_id(prev_offset + c),
                            v: node_id(next_offset + f),
                            weight: norm.apply(slice.iter().map(|&x| x as f64)),
                        });
                    }
                }
                partitions.push(filters);
            }
            LayerKind::Fc { out_dim } => {
                let w = tensors[index].expect("fc layers are learnable");
                match input {
                    ActShape::Spatial {
                        channels,
                        height,
                        width,
                    } => {
                        if channels != prev_size {
                            return Err(Error::Shape(format!(
                                "layer {index}: flatten boundary has {channels} channels but the previous partition has {prev_size} nodes"
                            )));
                        }
                        // rows of W for channel c are c*hw .. (c+1)*hw (channel-major flatten)
                        let hw = height * width;
                        for c in 0..channels {
                            for n in 0..out_dim {
                                let column = (c * hw..(c + 1) * hw)
                                    .map(|row| w.data[row * out_dim + n] as f64);
                                edges.push(Edge {
                                    u: node_id(prev_offset + c),
                                    v: node_id(next_offset + n),
                                    weight: norm.apply(column),
                                });
                            }
                        }
                    }
                    ActShape::Flat(d_in) => {
                        if d_in != prev_size {
                            return Err(Error::Shape(format!(
                                "layer {index}: fc input {d_in} differs from previous partition {prev_size}"
                            )));
                        }
                        push_dense(&mut edges, w, prev_offset, next_offset, d_in, out_dim, f64::abs);
                    }
                }
                partitions.push(out_dim);
            }
        }
        prev_offset = next_offset;
    }
    Ok(LayeredGraph {
        partitions,
        edges,
        representation: Representation::Rolled,
    })
}

/// Total unrolled node count (all activation positions including the input).
pub fn unrolled_node_count(arch: &ArchitectureSpec) -> Result<usize> {
    Ok(arch.propagate()?.iter().map(ActShape::len).sum())
}

pub fn build_unrolled_graph(
    ckpt: &EpochCheckpoint,
    arch: &ArchitectureSpec,
) -> Result<LayeredGraph> {
    build_unrolled_graph_with_limit(ckpt, arch, DEFAULT_UNROLLED_NODE_CEILING)
}

pub fn build_unrolled_graph_with_limit(
    ckpt: &EpochCheckpoint,
    arch: &ArchitectureSpec,
    node_ceiling: usize,
) -> Result<LayeredGraph> {
    let nodes = unrolled_node_count(arch)?;
    if nodes > node_ceiling || nodes > u32::MAX as usize {
        return Err(Error::GraphTooLarge {
            nodes,
            ceiling: node_ceiling,
        });
    }
    let (shapes, tensors) = layer_tensors(ckpt, arch)?;
    let partitions: Vec<usize> = shapes.iter().map(ActShape::len).collect();
    let edge_total: usize = arch
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| match l.kind {
            LayerKind::Conv {
                kernel_h, kernel_w, ..
            } => shapes[i + 1].len() * shapes[i].channels() * kernel_h * kernel_w,
            LayerKind::Pool { window, .. } => shapes[i + 1].len() * window * window,
            LayerKind::Fc { .. } => shapes[i].len() * shapes[i + 1].len(),
        })
        .sum();
    let mut edges = Vec::with_capacity(edge_total);

    let mut in_offset = 0usize;
    for (index, layer) in arch.layers.iter().enumerate() {
        let out_offset = in_offset + partitions[index];
        let (input, output) = (shapes[index], shapes[index + 1]);
        match (layer.kind, input, output) {
            (
                LayerKind::Conv {
                    filters,
                    kernel_h,
                    kernel_w,
                },
                ActShape::Spatial {
                    channels,
                    height,
                    width,
                },
                ActShape::Spatial {
                    height: out_h,
                    width: out_w,
                    ..
                },
            ) => {
                let k = tensors[index].expect("conv layers are learnable");
                for f in 0..filters {
                    for y in 0..out_h {
                        for x in 0..out_w {
                            let v = node_id(out_offset + (f * out_h + y) * out_w + x);
                            for c in 0..channels {
                                for dy in 0..kernel_h {
                                    for dx in 0..kernel_w {
                                        let u = in_offset + (c * height + y + dy) * width + x + dx;
                                        let weight = k.data
                                            [((f * channels + c) * kernel_h + dy) * kernel_w + dx];
                                        edges.push(Edge {
                                            u: node_id(u),
                                            v,
                                            weight: weight as f64,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (
                LayerKind::Pool { window, .. },
                ActShape::Spatial {
                    channels,
                    height,
                    width,
                },
                ActShape::Spatial {
                    height: out_h,
                    width: out_w,
                    ..
                },
            ) => {
                let weight = 1.0 / (window * window) as f64;
                for c in 0..channels {
                    for y in 0..out_h {
                        for x in 0..out_w {
                            let v = node_id(out_offset + (c * out_h + y) * out_w + x);
                            for dy in 0..window {
                                for dx in 0..window {
                                    let u = in_offset
                                        + (c * height + y * window + dy) * width
                                        + x * window
                                        + dx;
                                    edges.push(Edge {
                                        u: node_id(u),
                                        v,
                                        weight,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            (LayerKind::Fc { out_dim }, _, _) => {
                let w = tensors[index].expect("fc layers are learnable");
                push_dense(&mut edges, w, in_offset, out_offset, input.len(), out_dim, |x| x);
            }
            _ => {
                return Err(Error::Shape(format!(
                    "layer {index}: spatial layer applied to a flat activation"
                )))
            }
        }
        in_offset = out_offset;
    }
    debug_assert_eq!(edges.len(), edge_total);
    Ok(LayeredGraph {
        partitions,
        edges,
        representation: Representation::Unrolled,
    })
}
