#![allow(dead_code)]

use epochgraph::graphgen::{Edge, LayeredGraph, Representation};
use epochgraph::tensorstore::{
    ArchitectureSpec, CheckpointSeries, EpochCheckpoint, Hyperparams, InputShape, LayerSpec, Tensor,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    epochgraph::rng(seed)
}

/// Small random conv/pool/fc stack whose shapes always propagate.
pub fn random_arch<R: Rng>(rng: &mut R, with_conv: bool) -> ArchitectureSpec {
    let channels = rng.gen_range(1..=3);
    let (mut h, mut w) = (rng.gen_range(4..=9), rng.gen_range(4..=9));
    let input = InputShape::new(channels, h, w);
    let mut layers = Vec::new();
    let convs = if with_conv { rng.gen_range(1..=2) } else { 0 };
    for i in 0..convs {
        let kh = rng.gen_range(1..=3.min(h));
        let kw = rng.gen_range(1..=3.min(w));
        layers.push(LayerSpec::conv(rng.gen_range(1..=4), kh, kw));
        h = h + 1 - kh;
        w = w + 1 - kw;
        if i == 0 && h % 2 == 0 && w % 2 == 0 && rng.gen_bool(0.5) {
            layers.push(LayerSpec::avg_pool(2));
            h /= 2;
            w /= 2;
        }
    }
    for _ in 0..rng.gen_range(1..=2) {
        layers.push(LayerSpec::fc(rng.gen_range(1..=5)));
    }
    let arch = ArchitectureSpec::new(input, layers);
    arch.propagate().expect("generated architecture propagates");
    arch
}

pub fn random_fc_arch<R: Rng>(rng: &mut R) -> ArchitectureSpec {
    let input = InputShape::new(1, 1, rng.gen_range(1..=6));
    let layers = (0..rng.gen_range(1..=3))
        .map(|_| LayerSpec::fc(rng.gen_range(1..=6)))
        .collect();
    ArchitectureSpec::new(input, layers)
}

/// Weights uniform in ±1; roughly one entry in ten is exactly zero.
pub fn random_checkpoint<R: Rng>(arch: &ArchitectureSpec, epoch: u32, rng: &mut R) -> EpochCheckpoint {
    let tensors = arch
        .weight_shapes()
        .unwrap()
        .into_iter()
        .map(|(_, shape)| {
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(-1.0f32..1.0) })
                .collect();
            Tensor::new(shape, data).unwrap()
        })
        .collect();
    EpochCheckpoint {
        epoch,
        tensors,
        test_accuracy: rng.gen_range(0.0..1.0),
    }
}

pub fn random_series<R: Rng>(arch: ArchitectureSpec, epochs: u32, rng: &mut R) -> CheckpointSeries {
    let ckpts: Vec<EpochCheckpoint> = (1..=epochs).map(|e| random_checkpoint(&arch, e, rng)).collect();
    let final_accuracy = ckpts.last().map_or(0.0, |c| c.test_accuracy);
    CheckpointSeries {
        run_id: format!("r{}", rng.gen::<u32>()),
        arch,
        hyperparams: Hyperparams {
            learning_rate: rng.gen_range(1e-3..1.0),
            dropout: rng.gen_range(0.0..0.9),
            seed: rng.gen(),
        },
        epochs: ckpts,
        final_accuracy,
        early_stop_epoch: epochs,
    }
}

/// Random graph with `partitions` and each consecutive pair joined with
/// probability `density`; weights in (0, 2].
pub fn random_kpartite<R: Rng>(rng: &mut R, partitions: Vec<usize>, density: f64) -> LayeredGraph {
    let mut edges = Vec::new();
    let mut offset = 0;
    for pair in partitions.windows(2) {
        for i in 0..pair[0] {
            for j in 0..pair[1] {
                if rng.gen_bool(density) {
                    edges.push(Edge {
                        u: (offset + i) as u32,
                        v: (offset + pair[0] + j) as u32,
                        weight: 2.0 - rng.gen_range(0.0..2.0),
                    });
                }
            }
        }
        offset += pair[0];
    }
    LayeredGraph {
        partitions,
        edges,
        representation: Representation::Fc,
    }
}
