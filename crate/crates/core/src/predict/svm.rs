use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    require_two_classes, LabeledDataset, ModelKind, ModelParams, PredictorModel, Standardizer,
    TrainingMetadata,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            l2: 1e-3,
            seed: 0,
        }
    }
}

/// Hinge-loss linear classifier, stochastic subgradient descent on
/// standardized features. The bias is not regularized.
pub fn train_linear_svm(data: &LabeledDataset, config: &SvmConfig) -> Result<PredictorModel> {
    require_two_classes(data)?;
    if !(config.lr > 0.0) || config.l2 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "svm needs lr > 0 and l2 >= 0 (lr {}, l2 {})",
            config.lr, config.l2
        )));
    }
    let standardizer = Standardizer::fit(&data.rows);
    let xs: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| standardizer.transform(&r.features))
        .collect();
    let ys: Vec<f64> = data.rows.iter().map(|r| r.label.sign()).collect();
    let width = data.width();
    let mut w = vec![0.0; width];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = crate::rng(config.seed);
    let shrink = 1.0 - config.lr * config.l2;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &xs[i];
            let y = ys[i];
            let margin = y * (w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b);
            w.iter_mut().for_each(|a| *a *= shrink);
            if margin < 1.0 {
                for (a, v) in w.iter_mut().zip(x) {
                    *a += config.lr * y * v;
                }
                b += config.lr * y;
            }
        }
        if !b.is_finite() || w.iter().any(|a| !a.is_finite()) {
            return Err(Error::Diverged { lr: config.lr });
        }
    }
    Ok(PredictorModel {
        kind: ModelKind::LinearSvm,
        standardizer,
        params: ModelParams::Linear {
            weights: w,
            bias: b,
        },
        metadata: TrainingMetadata {
            epochs: config.epochs,
            learning_rate: config.lr,
            seed: config.seed,
            l2: config.l2,
            ridge_applied: false,
        },
    })
}
