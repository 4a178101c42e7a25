use rand::Rng;

use crate::error::{Error, Result};
use crate::tensorstore::{ActShape, ArchitectureSpec, LayerKind, Tensor};

/// Weights and biases of one learnable layer. Conv weights are
/// `[f, c, kh, kw]`, fc weights `[d_in, d_out]`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Feed-forward network interpreting an [`ArchitectureSpec`]: ReLU after
/// every learnable layer except the last, inverted dropout on hidden fc
/// outputs, softmax cross-entropy on the final logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ArchitectureSpec,
    shapes: Vec<ActShape>,
    last_learnable: usize,
    /// Indexed like `arch.layers`; `None` for pooling layers.
    pub params: Vec<Option<LayerParams>>,
}

/// Per-layer intermediate values kept for the backward pass.
pub struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Network {
    /// Uniform init in ±1/√fan_in, zero biases.
    pub fn init<R: Rng>(arch: &ArchitectureSpec, rng: &mut R) -> Result<Self> {
        let shapes = arch.propagate()?;
        let weight_shapes = arch.weight_shapes()?;
        let last_learnable = weight_shapes
            .last()
            .map(|(i, _)| *i)
            .ok_or_else(|| Error::Shape("architecture has no learnable layer".into()))?;
        let mut params: Vec<Option<LayerParams>> = vec![None; arch.layers.len()];
        for (index, shape) in weight_shapes {
            let (fan_in, outputs) = match arch.layers[index].kind {
                LayerKind::Conv { filters, .. } => (shape[1] * shape[2] * shape[3], filters),
                LayerKind::Fc { out_dim } => (shape[0], out_dim),
                LayerKind::Pool { .. } => unreachable!(),
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            params[index] = Some(LayerParams {
                weights: (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
                bias: vec![0.0; outputs],
            });
        }
        Ok(Self {
            arch: arch.clone(),
            shapes,
            last_learnable,
            params,
        })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().map(|s| s.len()).unwrap_or(0)
    }

    /// Weight tensors in checkpoint layout, rounded to `f32`.
    pub fn weight_tensors(&self) -> Result<Vec<Tensor>> {
        self.arch
            .weight_shapes()?
            .into_iter()
            .map(|(index, shape)| {
                let p = self.params[index].as_ref().expect("learnable layer has params");
                Tensor::new(shape, p.weights.iter().map(|&w| w as f32).collect())
            })
            .collect()
    }

    /// True when every parameter survives rounding to `f32`.
    pub fn is_finite(&self) -> bool {
        self.parameters().all(|&p| (p as f32).is_finite())
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.params
            .iter()
            .flatten()
            .flat_map(|p| p.weights.iter().chain(&p.bias))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.params
            .iter_mut()
            .flatten()
            .flat_map(|p| p.weights.iter_mut().chain(p.bias.iter_mut()))
    }

    pub fn parameter_len(&self) -> usize {
        self.parameters().count()
    }

    fn hidden_fc(&self, index: usize) -> bool {
        matches!(self.arch.layers[index].kind, LayerKind::Fc { .. }) && index != self.last_learnable
    }

    /// Forward pass. Dropout masks are drawn from `rng` when given; without
    /// it the network runs in inference mode.
    pub fn forward<R: Rng>(&self, x: &[f64], mut rng: Option<&mut R>) -> Trace {
        let layers = self.arch.layers.len();
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        let mut masks = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let input = &acts[i];
            let (in_shape, out_shape) = (self.shapes[i], self.shapes[i + 1]);
            let z = match (layer.kind, &self.params[i]) {
                (LayerKind::Conv { kernel_h, kernel_w, .. }, Some(p)) => {
                    conv_forward(input, in_shape, out_shape, kernel_h, kernel_w, p)
                }
                (LayerKind::Fc { out_dim }, Some(p)) => {
                    let mut z = p.bias.clone();
                    for (a, row) in input.iter().zip(p.weights.chunks_exact(out_dim)) {
                        if *a != 0.0 {
                            for (zj, w) in z.iter_mut().zip(row) {
                                *zj += a * w;
                            }
                        }
                    }
                    z
                }
                (LayerKind::Pool { window, .. }, None) => pool_forward(input, in_shape, out_shape, window),
                _ => unreachable!("params present exactly for learnable layers"),
            };
            let mut out = z.clone();
            if layer.is_learnable() && i != self.last_learnable {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let mut mask = None;
            if let Some(r) = rng.as_deref_mut() {
                let p = layer.dropout;
                if p > 0.0 && self.hidden_fc(i) {
                    let keep = 1.0 / (1.0 - p);
                    let m: Vec<f64> = (0..out.len())
                        .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    out.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                    mask = Some(m);
                }
            }
            pre.push(z);
            masks.push(mask);
            acts.push(out);
        }
        Trace { acts, pre, masks }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward::<rand_chacha::ChaCha8Rng>(x, None)
            .acts
            .pop()
            .unwrap_or_default()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        best
    }

    /// Cross-entropy of a trace's logits against `class`.
    pub fn loss(trace: &Trace, class: usize) -> f64 {
        let logits = trace.acts.last().expect("trace has output");
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        sum.ln() + max - logits[class]
    }

    /// Adds the gradient of the loss for `trace` to `grads` (laid out like
    /// `params`) and returns the loss.
    pub fn backward(&self, trace: &Trace, class: usize, grads: &mut [Option<LayerParams>]) -> f64 {
        let logits = trace.acts.last().expect("trace has output");
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        let loss = sum.ln() + max - logits[class];
        let mut g: Vec<f64> = exp.iter().map(|e| e / sum).collect();
        g[class] -= 1.0;

        for i in (0..self.arch.layers.len()).rev() {
            let layer = &self.arch.layers[i];
            if let Some(m) = &trace.masks[i] {
                g.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
            }
            if layer.is_learnable() && i != self.last_learnable {
                g.iter_mut()
                    .zip(&trace.pre[i])
                    .for_each(|(v, z)| if *z <= 0.0 { *v = 0.0 });
            }
            let input = &trace.acts[i];
            let (in_shape, out_shape) = (self.shapes[i], self.shapes[i + 1]);
            let need_input_grad = i > 0;
            g = match (layer.kind, &self.params[i]) {
                (LayerKind::Conv { kernel_h, kernel_w, .. }, Some(p)) => {
                    let gp = grads[i].as_mut().expect("grad slot");
                    conv_backward(input, &g, in_shape, out_shape, kernel_h, kernel_w, p, gp, need_input_grad)
                }
                (LayerKind::Fc { out_dim }, Some(p)) => {
                    let gp = grads[i].as_mut().expect("grad slot");
                    for (b, v) in gp.bias.iter_mut().zip(&g) {
                        *b += v;
                    }
                    let mut gin = vec![0.0; if need_input_grad { input.len() } else { 0 }];
                    for (k, a) in input.iter().enumerate() {
                        let wrow = &p.weights[k * out_dim..(k + 1) * out_dim];
                        let grow = &mut gp.weights[k * out_dim..(k + 1) * out_dim];
                        if *a != 0.0 {
                            for (gw, v) in grow.iter_mut().zip(&g) {
                                *gw += a * v;
                            }
                        }
                        if need_input_grad {
                            gin[k] = wrow.iter().zip(&g).map(|(w, v)| w * v).sum();
                        }
                    }
                    gin
                }
                (LayerKind::Pool { window, .. }, None) => pool_backward(&g, in_shape, out_shape, window),
                _ => unreachable!("params present exactly for learnable layers"),
            };
        }
        loss
    }

    pub fn zero_grads(&self) -> Vec<Option<LayerParams>> {
        self.params
            .iter()
            .map(|p| {
                p.as_ref().map(|p| LayerParams {
                    weights: vec![0.0; p.weights.len()],
                    bias: vec![0.0; p.bias.len()],
                })
            })
            .collect()
    }

    /// `params -= scale * grads`.
    pub fn apply(&mut self, grads: &[Option<LayerParams>], scale: f64) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            if let (Some(p), Some(g)) = (p, g) {
                for (w, d) in p.weights.iter_mut().zip(&g.weights) {
                    *w -= scale * d;
                }
                for (b, d) in p.bias.iter_mut().zip(&g.bias) {
                    *b -= scale * d;
                }
            }
        }
    }
}

fn spatial(s: ActShape) -> (usize, usize, usize) {
    match s {
        ActShape::Spatial {
            channels,
            height,
            width,
        } => (channels, height, width),
        ActShape::Flat(_) => unreachable!("spatial layer on flat activations"),
    }
}

fn conv_forward(
    input: &[f64],
    in_shape: ActShape,
    out_shape: ActShape,
    kh: usize,
    kw: usize,
    p: &LayerParams,
) -> Vec<f64> {
    let (c, h, w) = spatial(in_shape);
    let (f, ho, wo) = spatial(out_shape);
    let mut z = vec![0.0; f * ho * wo];
    for fi in 0..f {
        let out = &mut z[fi * ho * wo..(fi + 1) * ho * wo];
        out.iter_mut().for_each(|v| *v = p.bias[fi]);
        for ci in 0..c {
            for dy in 0..kh {
                for dx in 0..kw {
                    let k = p.weights[((fi * c + ci) * kh + dy) * kw + dx];
                    for y in 0..ho {
                        let src = &input[(ci * h + y + dy) * w + dx..][..wo];
                        let dst = &mut out[y * wo..(y + 1) * wo];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    z
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    g: &[f64],
    in_shape: ActShape,
    out_shape: ActShape,
    kh: usize,
    kw: usize,
    p: &LayerParams,
    gp: &mut LayerParams,
    need_input_grad: bool,
) -> Vec<f64> {
    let (c, h, w) = spatial(in_shape);
    let (f, ho, wo) = spatial(out_shape);
    let mut gin = vec![0.0; if need_input_grad { c * h * w } else { 0 }];
    for fi in 0..f {
        let gout = &g[fi * ho * wo..(fi + 1) * ho * wo];
        gp.bias[fi] += gout.iter().sum::<f64>();
        for ci in 0..c {
            for dy in 0..kh {
                for dx in 0..kw {
                    let widx = ((fi * c + ci) * kh + dy) * kw + dx;
                    let k = p.weights[widx];
                    let mut acc = 0.0;
                    for y in 0..ho {
                        let off = (ci * h + y + dy) * w + dx;
                        let gr = &gout[y * wo..(y + 1) * wo];
                        acc += input[off..off + wo].iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                        if need_input_grad {
                            for (d, s) in gin[off..off + wo].iter_mut().zip(gr) {
                                *d += k * s;
                            }
                        }
                    }
                    gp.weights[widx] += acc;
                }
            }
        }
    }
    gin
}

fn pool_forward(input: &[f64], in_shape: ActShape, out_shape: ActShape, window: usize) -> Vec<f64> {
    let (c, h, w) = spatial(in_shape);
    let (_, ho, wo) = spatial(out_shape);
    let scale = 1.0 / (window * window) as f64;
    let mut out = vec![0.0; c * ho * wo];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ci * ho + y / window) * wo + x / window] += input[(ci * h + y) * w + x] * scale;
            }
        }
    }
    out
}

fn pool_backward(g: &[f64], in_shape: ActShape, out_shape: ActShape, window: usize) -> Vec<f64> {
    let (c, h, w) = spatial(in_shape);
    let (_, ho, wo) = spatial(out_shape);
    let scale = 1.0 / (window * window) as f64;
    let mut gin = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                gin[(ci * h + y) * w + x] = g[(ci * ho + y / window) * wo + x / window] * scale;
            }
        }
    }
    gin
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::{InputShape, LayerSpec};

    fn toy() -> ArchitectureSpec {
        ArchitectureSpec::toy(InputShape::new(1, 8, 8), 4)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let arch = toy();
        let mut rng = crate::rng(3);
        let mut net = Network::init(&arch, &mut rng).unwrap();
        // nonzero biases keep ReLUs away from their kink
        for (k, b) in net.params.iter_mut().flatten().flat_map(|p| p.bias.iter_mut()).enumerate() {
            *b = 0.05 * ((k % 7) as f64 - 3.0);
        }
        let x: Vec<f64> = (0..64).map(|i| ((i * 37 % 17) as f64 / 17.0) - 0.4).collect();
        let class = 2;
        let mut grads = net.zero_grads();
        net.backward(&net.forward::<rand_chacha::ChaCha8Rng>(&x, None), class, &mut grads);
        let analytic: Vec<f64> = grads.iter().flatten().flat_map(|p| p.weights.iter().chain(&p.bias)).copied().collect();
        let total = net.parameter_len();
        let mut checked = 0;
        for k in (0..total).step_by(7) {
            let h = 1e-6;
            let base = *net.parameters().nth(k).unwrap();
            *net.parameters_mut().nth(k).unwrap() = base + h;
            let up = Network::loss(&net.forward::<rand_chacha::ChaCha8Rng>(&x, None), class);
            *net.parameters_mut().nth(k).unwrap() = base - h;
            let down = Network::loss(&net.forward::<rand_chacha::ChaCha8Rng>(&x, None), class);
            *net.parameters_mut().nth(k).unwrap() = base;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[k] - numeric).abs();
            assert!(
                err < 1e-7 || err / analytic[k].abs().max(numeric.abs()) < 1e-4,
                "param {k}: analytic {} numeric {numeric}",
                analytic[k]
            );
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn pool_averages() {
        let arch = ArchitectureSpec::new(
            InputShape::new(1, 2, 2),
            vec![LayerSpec::avg_pool(2), LayerSpec::fc(1)],
        );
        let mut net = Network::init(&arch, &mut crate::rng(0)).unwrap();
        net.params[1].as_mut().unwrap().weights = vec![1.0];
        assert_eq!(net.logits(&[1.0, 2.0, 3.0, 6.0]), vec![3.0]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let arch = ArchitectureSpec::new(InputShape::new(2, 4, 4), vec![LayerSpec::conv(3, 2, 2)]);
        let net = Network::init(&arch, &mut crate::rng(1)).unwrap();
        let x: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let out = net.logits(&x);
        let p = net.params[0].as_ref().unwrap();
        for f in 0..3 {
            for y in 0..3 {
                for xx in 0..3 {
                    let mut s = p.bias[f];
                    for c in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                s += p.weights[((f * 2 + c) * 2 + dy) * 2 + dx] * x[(c * 4 + y + dy) * 4 + xx + dx];
                            }
                        }
                    }
                    assert!((out[(f * 3 + y) * 3 + xx] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverted_dropout_scaling() {
        let arch = ArchitectureSpec::new(
            InputShape::new(1, 1, 1),
            vec![LayerSpec::fc(2000).with_dropout(0.4), LayerSpec::fc(1)],
        );
        let mut net = Network::init(&arch, &mut crate::rng(0)).unwrap();
        let p = net.params[0].as_mut().unwrap();
        p.weights.iter_mut().for_each(|w| *w = 1.0);
        let mut rng = crate::rng(9);
        let trials = 50;
        let (mut kept, mut scaled) = (0.0, 0.0);
        for _ in 0..trials {
            let t = net.forward(&[1.0], Some(&mut rng));
            let m = t.masks[0].as_ref().unwrap();
            // unscaled keep mask: expected value (1 - p) times the clean activation
            kept += m.iter().filter(|v| **v > 0.0).count() as f64 / 2000.0;
            scaled += t.acts[1].iter().sum::<f64>() / 2000.0;
        }
        kept /= trials as f64;
        scaled /= trials as f64;
        assert!((kept - 0.6).abs() < 0.01, "{kept}");
        assert!((scaled - 1.0).abs() < 0.02, "{scaled}");
        // inference is deterministic and unscaled
        let clean = net.forward::<rand_chacha::ChaCha8Rng>(&[1.0], None);
        assert!(clean.acts[1].iter().all(|v| *v == 1.0));
    }

    #[test]
    fn tensors_round_to_f32() {
        let net = Network::init(&toy(), &mut crate::rng(2)).unwrap();
        let t = net.weight_tensors().unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t[0].shape, vec![8, 1, 3, 3]);
        assert_eq!(t[2].shape, vec![16, 32]);
        assert_eq!(t[0].data[0], net.params[0].as_ref().unwrap().weights[0] as f32);
    }
}
