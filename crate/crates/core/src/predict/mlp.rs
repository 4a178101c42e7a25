use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    require_two_classes, LabeledDataset, ModelKind, ModelParams, PredictorModel, Standardizer,
    TrainingMetadata,
};
use crate::error::{Error, Result};

const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 200,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// One ReLU hidden layer and a two-way softmax output. Weight matrices are
/// row-major `[fan_in][fan_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub inputs: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParams {
    /// Uniform init in ±1/√fan_in for both weight matrices, zero biases.
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "mlp needs inputs > 0 and hidden > 0 (got {inputs}, {hidden})"
            )));
        }
        let mut rng = crate::rng(seed);
        let mut uniform = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let w1 = uniform(inputs, inputs * hidden);
        let w2 = uniform(hidden, hidden * CLASSES);
        Ok(Self {
            inputs,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; CLASSES],
        })
    }

    /// Returns (hidden activations after ReLU, output logits).
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, [f64; CLASSES]) {
        let mut h = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += xi * w;
            }
        }
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = [self.b2[0], self.b2[1]];
        for (j, &hj) in h.iter().enumerate() {
            logits[0] += hj * self.w2[j * CLASSES];
            logits[1] += hj * self.w2[j * CLASSES + 1];
        }
        (h, logits)
    }

    /// Cross-entropy loss for one sample and its gradient, laid out like `self`.
    pub fn loss_and_grad(&self, x: &[f64], class: usize) -> (f64, MlpParams) {
        let pre: Vec<f64> = {
            let mut z = self.b1.clone();
            for (i, &xi) in x.iter().enumerate() {
                let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
                for (zj, w) in z.iter_mut().zip(row) {
                    *zj += xi * w;
                }
            }
            z
        };
        let h: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let mut logits = [self.b2[0], self.b2[1]];
        for (j, &hj) in h.iter().enumerate() {
            logits[0] += hj * self.w2[j * CLASSES];
            logits[1] += hj * self.w2[j * CLASSES + 1];
        }
        let max = logits[0].max(logits[1]);
        let exp = [(logits[0] - max).exp(), (logits[1] - max).exp()];
        let sum = exp[0] + exp[1];
        let probs = [exp[0] / sum, exp[1] / sum];
        let loss = -(probs[class].max(f64::MIN_POSITIVE)).ln();

        let mut dlogits = probs;
        dlogits[class] -= 1.0;
        let mut grad = MlpParams {
            inputs: self.inputs,
            hidden: self.hidden,
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.w2.len()],
            b2: dlogits.to_vec(),
        };
        let mut dpre = vec![0.0; self.hidden];
        for j in 0..self.hidden {
            grad.w2[j * CLASSES] = h[j] * dlogits[0];
            grad.w2[j * CLASSES + 1] = h[j] * dlogits[1];
            if pre[j] > 0.0 {
                dpre[j] = self.w2[j * CLASSES] * dlogits[0] + self.w2[j * CLASSES + 1] * dlogits[1];
            }
        }
        grad.b1.copy_from_slice(&dpre);
        for (i, &xi) in x.iter().enumerate() {
            for j in 0..self.hidden {
                grad.w1[i * self.hidden + j] = xi * dpre[j];
            }
        }
        (loss, grad)
    }

    fn step(&mut self, grad: &MlpParams, lr: f64) {
        for (p, g) in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .zip(grad.w1.iter().chain(&grad.b1).chain(&grad.w2).chain(&grad.b2))
        {
            *p -= lr * g;
        }
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }
}

/// Per-sample SGD on softmax cross-entropy.
pub fn train_mlp(data: &LabeledDataset, config: &MlpConfig) -> Result<PredictorModel> {
    require_two_classes(data)?;
    if !(config.lr > 0.0) {
        return Err(Error::InvalidParameter(format!("mlp lr {} must be > 0", config.lr)));
    }
    let standardizer = Standardizer::fit(&data.rows);
    let xs: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| standardizer.transform(&r.features))
        .collect();
    let mut params = MlpParams::init(data.width(), config.hidden, config.seed)?;
    let mut rng = crate::rng(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grad) = params.loss_and_grad(&xs[i], data.rows[i].label.index());
            total += loss;
            params.step(&grad, config.lr);
        }
        if !total.is_finite() || params.parameters().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { lr: config.lr });
        }
    }
    Ok(PredictorModel {
        kind: ModelKind::Mlp,
        standardizer,
        params: ModelParams::Mlp(params),
        metadata: TrainingMetadata {
            epochs: config.epochs,
            learning_rate: config.lr,
            seed: config.seed,
            l2: 0.0,
            ridge_applied: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::Threshold;
    use super::*;

    #[test]
    fn finite_difference_gradient() {
        let params = MlpParams::init(3, 4, 11).unwrap();
        let x = [0.7, -1.3, 0.4];
        for class in 0..2 {
            let (_, grad) = params.loss_and_grad(&x, class);
            let analytic: Vec<f64> = grad.parameters().copied().collect();
            let count = analytic.len();
            for k in 0..count {
                let h = 1e-6;
                let mut plus = params.clone();
                *plus.parameters_mut().nth(k).unwrap() += h;
                let mut minus = params.clone();
                *minus.parameters_mut().nth(k).unwrap() -= h;
                let numeric =
                    (plus.loss_and_grad(&x, class).0 - minus.loss_and_grad(&x, class).0) / (2.0 * h);
                let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic[k] - numeric).abs() / denom < 1e-4 || (analytic[k] - numeric).abs() < 1e-9,
                    "param {k}: analytic {} numeric {numeric}",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn init_breaks_symmetry() {
        let p = MlpParams::init(5, 8, 3).unwrap();
        let bound = 1.0 / 5f64.sqrt();
        assert!(p.w1.iter().all(|w| w.abs() <= bound));
        assert!(p.w1.iter().any(|&w| w != 0.0));
        let distinct: std::collections::HashSet<u64> = p.w1.iter().map(|w| w.to_bits()).collect();
        assert!(distinct.len() > p.w1.len() / 2);
        assert!(MlpParams::init(5, 0, 3).is_err());
    }

    #[test]
    fn learns_xor() {
        let mut rows = Vec::new();
        let mut rng = crate::rng(5);
        for i in 0..200 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let acc = if (a > 0.0) ^ (b > 0.0) { 0.9 } else { 0.1 };
            rows.push((i.to_string(), vec![a, b], acc));
        }
        let data = LabeledDataset::from_rows(rows, Threshold::Fixed(0.5)).unwrap();
        let config = MlpConfig {
            hidden: 8,
            epochs: 300,
            lr: 0.05,
            seed: 1,
        };
        let model = train_mlp(&data, &config).unwrap();
        let correct = data
            .rows
            .iter()
            .filter(|r| model.predict_label(&r.features) == r.label)
            .count();
        assert!(correct as f64 / data.len() as f64 > 0.9, "{correct}/200");
    }
}
