use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::report::{rank_weights, FeatureWeight};
use super::{ClassBalance, Label, LabeledDataset, ModelConfig, ModelKind, Threshold};
use crate::error::{Error, Result};
use crate::signature::{compose_blocks, window_blocks, SignatureMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Regress,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classify => "classify",
            Task::Regress => "regress",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: Option<f64>,
    pub mae: Option<f64>,
    pub r2: Option<f64>,
    /// MAE of predicting the training-fold mean for every test row.
    pub baseline_mae: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Last observed epoch.
    pub t: usize,
    pub feature_len: usize,
    /// Mean accuracy (classification) or mean R² (regression).
    pub metric: f64,
    pub mae: Option<f64>,
    pub baseline_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: ModelKind,
    pub n_rows: usize,
    pub feature_len: usize,
    pub threshold: Option<f64>,
    pub balance: Option<ClassBalance>,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: Option<f64>,
    pub mean_mae: Option<f64>,
    pub mean_r2: Option<f64>,
    pub mean_baseline_mae: Option<f64>,
    pub curve: Vec<CurvePoint>,
    pub feature_weights: Vec<FeatureWeight>,
}

impl EvalReport {
    /// Mean accuracy for classification, mean R² for regression.
    pub fn metric(&self) -> f64 {
        match self.task {
            Task::Classify => self.mean_accuracy.unwrap_or(f64::NAN),
            Task::Regress => self.mean_r2.unwrap_or(f64::NAN),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_folds_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "n_train", "n_test", "accuracy", "mae", "r2", "baseline_mae", "skipped"])?;
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                opt(f.accuracy),
                opt(f.mae),
                opt(f.r2),
                opt(f.baseline_mae),
                f.skipped.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<folds csv>", e))?;
        Ok(())
    }

    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "feature_len", "metric", "mae", "baseline_mae"])?;
        for p in &self.curve {
            w.write_record([
                p.t.to_string(),
                p.feature_len.to_string(),
                p.metric.to_string(),
                opt(p.mae),
                opt(p.baseline_mae),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<curve csv>", e))?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// MAE of the constant predictor at the mean, i.e. the mean absolute deviation.
pub fn constant_mean_mae(targets: &[f64]) -> f64 {
    if targets.is_empty() {
        return f64::NAN;
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    targets.iter().map(|y| (y - mean).abs()).sum::<f64>() / n
}

/// Fold index for every row. Classification folds are stratified by label;
/// regression folds are a plain shuffled partition.
fn assign_folds(data: &LabeledDataset, task: Task, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = crate::rng(seed);
    let mut fold_of = vec![0; data.len()];
    let groups: Vec<Vec<usize>> = match task {
        Task::Classify => [Label::Low, Label::High]
            .iter()
            .map(|&l| (0..data.len()).filter(|&i| data.rows[i].label == l).collect())
            .collect(),
        Task::Regress => vec![(0..data.len()).collect()],
    };
    let mut counter = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            fold_of[i] = counter % folds;
            counter += 1;
        }
    }
    fold_of
}

/// k-fold cross-validation. Standardization is fitted inside each training
/// fold by the model itself.
pub fn cross_validate(
    data: &LabeledDataset,
    config: &ModelConfig,
    folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut report = cross_validate_inner(data, config, folds, seed, |train| config.train(train))?;
    let trainable = config.task() == Task::Regress || !data.balance().single_class();
    if trainable {
        let full = config.train(data)?;
        if let Some(w) = full.linear_weights() {
            report.feature_weights = rank_weights(w, None);
        }
    }
    Ok(report)
}

fn cross_validate_inner(
    data: &LabeledDataset,
    config: &ModelConfig,
    folds: usize,
    seed: u64,
    train: impl Fn(&LabeledDataset) -> Result<super::PredictorModel>,
) -> Result<EvalReport> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("folds must be >= 2, got {folds}")));
    }
    if data.len() < folds {
        return Err(Error::InvalidParameter(format!(
            "{} rows cannot fill {folds} folds",
            data.len()
        )));
    }
    let task = config.task();
    let fold_of = assign_folds(data, task, folds, seed);
    let mut results = Vec::with_capacity(folds);
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != fold).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == fold).collect();
        let train_set = data.subset(&train_idx);
        let test_set = data.subset(&test_idx);
        let mut result = FoldResult {
            fold,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            accuracy: None,
            mae: None,
            r2: None,
            baseline_mae: None,
            skipped: None,
        };
        if task == Task::Classify && train_set.balance().single_class() {
            log::warn!("fold {fold}: training split has a single class, skipped");
            result.skipped = Some("training split has a single class".into());
            results.push(result);
            continue;
        }
        let model = train(&train_set)?;
        match task {
            Task::Classify => {
                let correct = test_set
                    .rows
                    .iter()
                    .filter(|r| model.predict_label(&r.features) == r.label)
                    .count();
                result.accuracy = Some(correct as f64 / test_set.len() as f64);
            }
            Task::Regress => {
                let train_mean = train_set.rows.iter().map(|r| r.accuracy).sum::<f64>()
                    / train_set.len() as f64;
                let ys: Vec<f64> = test_set.rows.iter().map(|r| r.accuracy).collect();
                let preds: Vec<f64> = test_set
                    .rows
                    .iter()
                    .map(|r| model.predict_value(&r.features))
                    .collect();
                let n = ys.len() as f64;
                let mae = ys.iter().zip(&preds).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
                let baseline = ys.iter().map(|y| (y - train_mean).abs()).sum::<f64>() / n;
                let test_mean = ys.iter().sum::<f64>() / n;
                let ss_res: f64 = ys.iter().zip(&preds).map(|(y, p)| (y - p) * (y - p)).sum();
                let ss_tot: f64 = ys.iter().map(|y| (y - test_mean) * (y - test_mean)).sum();
                let r2 = if ss_tot > 0.0 {
                    1.0 - ss_res / ss_tot
                } else if ss_res == 0.0 {
                    1.0
                } else {
                    0.0
                };
                result.mae = Some(mae);
                result.r2 = Some(r2);
                result.baseline_mae = Some(baseline);
            }
        }
        results.push(result);
    }

    let mean = |get: fn(&FoldResult) -> Option<f64>| {
        let vals: Vec<f64> = results.iter().filter_map(get).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let report = EvalReport {
        task,
        model: config.kind(),
        n_rows: data.len(),
        feature_len: data.width(),
        threshold: (task == Task::Classify).then_some(data.threshold),
        balance: (task == Task::Classify).then(|| data.balance()),
        mean_accuracy: mean(|f| f.accuracy),
        mean_mae: mean(|f| f.mae),
        mean_r2: mean(|f| f.r2),
        mean_baseline_mae: mean(|f| f.baseline_mae),
        folds: results,
        curve: Vec::new(),
        feature_weights: Vec::new(),
    };
    if report.folds.iter().all(|f| f.skipped.is_some()) {
        return Err(Error::Validation("every cross-validation fold was skipped".into()));
    }
    Ok(report)
}

/// Per-epoch summary blocks of one run; `blocks[i]` belongs to epoch `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSnapshots {
    pub run_id: String,
    pub final_accuracy: f64,
    pub blocks: Vec<Vec<f64>>,
}

/// How a run's blocks become one predictor input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Temporal signature over epochs `1..=t`.
    Prefix { t: usize, mode: SignatureMode },
    /// `s_start ⊕ s_end`.
    Window { start: u32, end: u32 },
}

impl FeatureSpec {
    pub fn last_epoch(&self) -> usize {
        match *self {
            FeatureSpec::Prefix { t, .. } => t,
            FeatureSpec::Window { end, .. } => end as usize,
        }
    }

    pub fn features(&self, run: &RunSnapshots) -> Result<Vec<f64>> {
        let needed = self.last_epoch();
        if run.blocks.len() < needed {
            return Err(Error::InsufficientEpochs {
                run_id: run.run_id.clone(),
                available: run.blocks.len(),
                required: needed,
            });
        }
        match *self {
            FeatureSpec::Prefix { t, mode } => {
                if t == 0 {
                    return Err(Error::InvalidParameter("epoch budget t must be >= 1".into()));
                }
                compose_blocks(&run.blocks[..t], mode)
            }
            FeatureSpec::Window { start, end } => window_blocks(&run.blocks, 1, start, end),
        }
    }

    /// The same kind of input ending at epoch `t`, if it fits.
    fn ending_at(&self, t: usize) -> Option<FeatureSpec> {
        match *self {
            FeatureSpec::Prefix { mode, .. } => Some(FeatureSpec::Prefix { t, mode }),
            FeatureSpec::Window { start, end } => {
                let span = (end - start) as usize;
                (t > span).then(|| FeatureSpec::Window {
                    start: (t - span) as u32,
                    end: t as u32,
                })
            }
        }
    }
}

pub fn build_dataset(
    runs: &[RunSnapshots],
    spec: &FeatureSpec,
    threshold: Threshold,
) -> Result<LabeledDataset> {
    let rows = runs
        .iter()
        .map(|r| Ok((r.run_id.clone(), spec.features(r)?, r.final_accuracy)))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::from_rows(rows, threshold)
}

/// Cross-validated metric as a function of the number of observed epochs.
/// The returned report carries the folds of the largest budget plus one curve
/// point per budget.
pub fn epoch_budget_curve(
    runs: &[RunSnapshots],
    template: &FeatureSpec,
    threshold: Threshold,
    config: &ModelConfig,
    folds: usize,
    seed: u64,
    max_t: usize,
) -> Result<EvalReport> {
    if max_t == 0 {
        return Err(Error::InvalidParameter("max_t must be >= 1".into()));
    }
    if let Some(short) = runs.iter().find(|r| r.blocks.len() < max_t) {
        return Err(Error::InsufficientEpochs {
            run_id: short.run_id.clone(),
            available: short.blocks.len(),
            required: max_t,
        });
    }
    let mut curve = Vec::new();
    let mut last = None;
    for t in 1..=max_t {
        let Some(spec) = template.ending_at(t) else {
            continue;
        };
        let data = build_dataset(runs, &spec, threshold)?;
        let report = cross_validate(&data, config, folds, seed)?;
        curve.push(CurvePoint {
            t,
            feature_len: data.width(),
            metric: report.metric(),
            mae: report.mean_mae,
            baseline_mae: report.mean_baseline_mae,
        });
        last = Some(report);
    }
    let mut report =
        last.ok_or_else(|| Error::InvalidParameter("no budget fits the requested window".into()))?;
    report.curve = curve;
    Ok(report)
}
