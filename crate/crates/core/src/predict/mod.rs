//! Performance prediction from temporal signatures: labeling, linear SVM,
//! one-hidden-layer MLP, OLS regression, cross-validation and feature
//! reports.

mod cv;
mod mlp;
mod ols;
mod report;
mod svm;

pub use cv::{
    build_dataset, constant_mean_mae, cross_validate, epoch_budget_curve, CurvePoint, EvalReport, FeatureSpec,
    FoldResult, RunSnapshots, Task,
};
pub use mlp::{train_mlp, MlpConfig, MlpParams};
pub use ols::{train_ols, OlsConfig};
pub use report::{
    feature_layout, feature_report, group_means, rank_weights, FeatureName, FeatureReport, FeatureWeight,
    GroupMeanRow, TrajectoryRow,
};
pub use svm::{train_linear_svm, SvmConfig};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::TemporalSignature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Low,
    High,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Low => -1.0,
            Label::High => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Low => 0,
            Label::High => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Low => "low",
            Label::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Accuracy fraction; `high` iff accuracy is strictly greater.
    Fixed(f64),
    /// Lower median of the final accuracies.
    Median,
}

impl Threshold {
    pub fn resolve(self, accuracies: &[f64]) -> Result<f64> {
        match self {
            Threshold::Fixed(t) if t.is_finite() => Ok(t),
            Threshold::Fixed(t) => Err(Error::InvalidParameter(format!("threshold {t}"))),
            Threshold::Median => {
                if accuracies.is_empty() {
                    return Err(Error::Empty("no accuracies for median threshold".into()));
                }
                let mut sorted = accuracies.to_vec();
                sorted.sort_by(f64::total_cmp);
                Ok(sorted[(sorted.len() - 1) / 2])
            }
        }
    }
}

pub fn label_for(accuracy: f64, threshold: f64) -> Label {
    if accuracy > threshold {
        Label::High
    } else {
        Label::Low
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub run_id: String,
    pub features: Vec<f64>,
    pub accuracy: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub rows: Vec<Sample>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub low: usize,
    pub high: usize,
}

impl ClassBalance {
    pub fn single_class(&self) -> bool {
        self.low == 0 || self.high == 0
    }
}

impl LabeledDataset {
    /// Builds a dataset from `(run_id, features, accuracy)` triples.
    pub fn from_rows(rows: Vec<(String, Vec<f64>, f64)>, threshold: Threshold) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        let width = rows[0].1.len();
        for (id, features, acc) in &rows {
            if features.len() != width {
                return Err(Error::Validation(format!(
                    "run {id}: {} features, expected {width}",
                    features.len()
                )));
            }
            if !acc.is_finite() || features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("run {id}: non-finite value")));
            }
        }
        let accuracies: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let threshold = threshold.resolve(&accuracies)?;
        let rows = rows
            .into_iter()
            .map(|(run_id, features, accuracy)| Sample {
                run_id,
                features,
                accuracy,
                label: label_for(accuracy, threshold),
            })
            .collect();
        let data = Self { rows, threshold };
        let balance = data.balance();
        if balance.single_class() {
            log::warn!(
                "all {} rows fall in one class at threshold {threshold}",
                data.len()
            );
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map(|r| r.features.len()).unwrap_or(0)
    }

    pub fn balance(&self) -> ClassBalance {
        let high = self.rows.iter().filter(|r| r.label == Label::High).count();
        ClassBalance {
            low: self.rows.len() - high,
            high,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            threshold: self.threshold,
        }
    }

    /// Same rows with labels randomly permuted (null-hypothesis control).
    pub fn with_shuffled_labels(&self, seed: u64) -> LabeledDataset {
        use rand::seq::SliceRandom;
        let mut labels: Vec<Label> = self.rows.iter().map(|r| r.label).collect();
        labels.shuffle(&mut crate::rng(seed));
        let mut out = self.clone();
        for (row, label) in out.rows.iter_mut().zip(labels) {
            row.label = label;
        }
        out
    }
}

/// Labels temporal signatures by final accuracy.
pub fn label_dataset(
    runs: &[(TemporalSignature, f64)],
    threshold: Threshold,
) -> Result<(LabeledDataset, ClassBalance)> {
    let rows = runs
        .iter()
        .map(|(sig, acc)| (sig.run_id.clone(), sig.vector.clone(), *acc))
        .collect();
    let data = LabeledDataset::from_rows(rows, threshold)?;
    let balance = data.balance();
    Ok((data, balance))
}

/// Per-column affine standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Sample]) -> Self {
        let width = rows.first().map(|r| r.features.len()).unwrap_or(0);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(&r.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(&r.features).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                // constant columns map to zero instead of dividing by zero
                if sd > 1e-12 * (1.0 + sd.abs()) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSvm,
    Mlp,
    OlsRegression,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::Mlp => "mlp",
            ModelKind::OlsRegression => "ols_regression",
        })
    }
}

/// Predictor choice plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    LinearSvm(SvmConfig),
    Mlp(MlpConfig),
    Ols(OlsConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::LinearSvm(_) => ModelKind::LinearSvm,
            ModelConfig::Mlp(_) => ModelKind::Mlp,
            ModelConfig::Ols(_) => ModelKind::OlsRegression,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            ModelConfig::Ols(_) => Task::Regress,
            _ => Task::Classify,
        }
    }

    pub fn train(&self, data: &LabeledDataset) -> Result<PredictorModel> {
        match self {
            ModelConfig::LinearSvm(c) => train_linear_svm(data, c),
            ModelConfig::Mlp(c) => train_mlp(data, c),
            ModelConfig::Ols(c) => train_ols(data, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    /// Score `w · x + b` on standardized features.
    Linear { weights: Vec<f64>, bias: f64 },
    Mlp(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub l2: f64,
    /// OLS only: the normal equations were singular and ridge was applied.
    pub ridge_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub kind: ModelKind,
    pub standardizer: Standardizer,
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
}

impl PredictorModel {
    pub fn input_width(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Raw model output: signed margin (SVM), high-minus-low logit (MLP) or
    /// predicted accuracy (OLS).
    pub fn score(&self, features: &[f64]) -> f64 {
        let x = self.standardizer.transform(features);
        match &self.params {
            ModelParams::Linear { weights, bias } => {
                weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + bias
            }
            ModelParams::Mlp(p) => {
                let logits = p.forward(&x).1;
                logits[1] - logits[0]
            }
        }
    }

    pub fn predict_label(&self, features: &[f64]) -> Label {
        if self.score(features) > 0.0 {
            Label::High
        } else {
            Label::Low
        }
    }

    pub fn predict_value(&self, features: &[f64]) -> f64 {
        self.score(features)
    }

    /// Weights on standardized features for linear models.
    pub fn linear_weights(&self) -> Option<&[f64]> {
        match &self.params {
            ModelParams::Linear { weights, .. } => Some(weights),
            ModelParams::Mlp(_) => None,
        }
    }

    /// Linear coefficients mapped back to raw feature units: `(weights, intercept)`.
    pub fn raw_coefficients(&self) -> Option<(Vec<f64>, f64)> {
        let ModelParams::Linear { weights, bias } = &self.params else {
            return None;
        };
        let s = &self.standardizer;
        let raw: Vec<f64> = weights.iter().zip(&s.std).map(|(w, sd)| w / sd).collect();
        let intercept = bias - raw.iter().zip(&s.mean).map(|(w, m)| w * m).sum::<f64>();
        Some((raw, intercept))
    }
}

pub(crate) fn require_two_classes(data: &LabeledDataset) -> Result<()> {
    if data.balance().single_class() {
        return Err(Error::Validation(
            "classifier training needs both high and low labels".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_goes_low() {
        assert_eq!(label_for(0.4, 0.4), Label::Low);
        assert_eq!(label_for(0.40001, 0.4), Label::High);
    }

    #[test]
    fn median_split_is_even() {
        let rows = (0..120)
            .map(|i| (format!("r{i}"), vec![i as f64], (i * 7 % 120) as f64 / 120.0))
            .collect();
        let d = LabeledDataset::from_rows(rows, Threshold::Median).unwrap();
        assert_eq!(d.balance(), ClassBalance { low: 60, high: 60 });
    }

    #[test]
    fn single_class_flagged_not_rejected() {
        let rows = vec![("a".into(), vec![1.0], 0.1), ("b".into(), vec![2.0], 0.2)];
        let d = LabeledDataset::from_rows(rows, Threshold::Fixed(0.9)).unwrap();
        assert!(d.balance().single_class());
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![("a".into(), vec![1.0], 0.1), ("b".into(), vec![2.0, 3.0], 0.2)];
        assert!(LabeledDataset::from_rows(rows, Threshold::Median).is_err());
    }

    #[test]
    fn standardizer_constant_column() {
        let rows: Vec<Sample> = (0..4)
            .map(|i| Sample {
                run_id: i.to_string(),
                features: vec![5.0, i as f64],
                accuracy: 0.0,
                label: Label::Low,
            })
            .collect();
        let s = Standardizer::fit(&rows);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.transform(&[5.0, 1.5]), vec![0.0, 0.0]);
    }
}
