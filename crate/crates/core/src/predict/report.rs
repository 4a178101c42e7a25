use std::io::Write;

use serde::{Deserialize, Serialize};

use super::cv::{FeatureSpec, RunSnapshots};
use super::{label_for, Label, PredictorModel};
use crate::error::{Error, Result};

/// Where a predictor input column comes from: a summary statistic of one
/// epoch's block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureName {
    pub index: usize,
    pub epoch: usize,
    pub stat: String,
}

impl FeatureName {
    pub fn label(&self) -> String {
        format!("e{}:{}", self.epoch, self.stat)
    }
}

/// Column names for the input built by `spec` from blocks whose entries are
/// named `block_names`.
pub fn feature_layout(spec: &FeatureSpec, block_names: &[String]) -> Vec<FeatureName> {
    let epochs: Vec<usize> = match *spec {
        FeatureSpec::Prefix { t, .. } => (1..=t).collect(),
        FeatureSpec::Window { start, end } => vec![start as usize, end as usize],
    };
    epochs
        .into_iter()
        .flat_map(|epoch| block_names.iter().map(move |s| (epoch, s.clone())))
        .enumerate()
        .map(|(index, (epoch, stat))| FeatureName { index, epoch, stat })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    /// Weight on the standardized column.
    pub weight: f64,
}

/// Sorts columns by decreasing |w|, ties broken by column index.
pub fn rank_weights(weights: &[f64], names: Option<&[FeatureName]>) -> Vec<FeatureWeight> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .total_cmp(&weights[a].abs())
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, index)| FeatureWeight {
            rank: rank + 1,
            index,
            name: names
                .and_then(|n| n.get(index))
                .map(FeatureName::label)
                .unwrap_or_else(|| format!("f_{}", index + 1)),
            weight: weights[index],
        })
        .collect()
}

/// One run's block at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub run_id: String,
    pub label: Label,
    pub final_accuracy: f64,
    pub epoch: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeanRow {
    pub label: Label,
    pub epoch: usize,
    pub runs: usize,
    pub means: Vec<f64>,
}

/// Per-label, per-epoch average of trajectory values. Rows come out sorted by
/// (label, epoch).
pub fn group_means(rows: &[TrajectoryRow]) -> Vec<GroupMeanRow> {
    let mut acc: std::collections::BTreeMap<(Label, usize), (usize, Vec<f64>)> =
        std::collections::BTreeMap::new();
    for r in rows {
        let entry = acc
            .entry((r.label, r.epoch))
            .or_insert_with(|| (0, vec![0.0; r.values.len()]));
        entry.0 += 1;
        for (s, v) in entry.1.iter_mut().zip(&r.values) {
            *s += v;
        }
    }
    acc.into_iter()
        .map(|((label, epoch), (runs, sums))| GroupMeanRow {
            label,
            epoch,
            runs,
            means: sums.into_iter().map(|s| s / runs as f64).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub block_names: Vec<String>,
    /// `None` for models without linear weights.
    pub weights: Option<Vec<FeatureWeight>>,
    pub trajectories: Vec<TrajectoryRow>,
    pub group_means: Vec<GroupMeanRow>,
}

/// Weight ranking for linear models plus per-epoch trajectories of every
/// block entry, split by label at `threshold`.
pub fn feature_report(
    model: &PredictorModel,
    names: &[FeatureName],
    runs: &[RunSnapshots],
    block_names: &[String],
    threshold: f64,
) -> Result<FeatureReport> {
    let weights = match model.linear_weights() {
        Some(w) => {
            if w.len() != names.len() {
                return Err(Error::Validation(format!(
                    "model has {} weights but layout names {} columns",
                    w.len(),
                    names.len()
                )));
            }
            Some(rank_weights(w, Some(names)))
        }
        None => None,
    };
    let mut trajectories = Vec::new();
    for run in runs {
        let label = label_for(run.final_accuracy, threshold);
        for (i, block) in run.blocks.iter().enumerate() {
            if block.len() != block_names.len() {
                return Err(Error::Validation(format!(
                    "run {}: block of width {} at epoch {}, expected {}",
                    run.run_id,
                    block.len(),
                    i + 1,
                    block_names.len()
                )));
            }
            trajectories.push(TrajectoryRow {
                run_id: run.run_id.clone(),
                label,
                final_accuracy: run.final_accuracy,
                epoch: i + 1,
                values: block.clone(),
            });
        }
    }
    let group_means = group_means(&trajectories);
    Ok(FeatureReport {
        block_names: block_names.to_vec(),
        weights,
        trajectories,
        group_means,
    })
}

impl FeatureReport {
    pub fn write_weights_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "index", "name", "weight", "abs_weight"])?;
        for fw in self.weights.iter().flatten() {
            w.write_record([
                fw.rank.to_string(),
                fw.index.to_string(),
                fw.name.clone(),
                fw.weight.to_string(),
                fw.weight.abs().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<weights csv>", e))?;
        Ok(())
    }

    pub fn write_trajectories_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "run_id".to_string(),
            "label".into(),
            "final_accuracy".into(),
            "epoch".into(),
        ];
        header.extend(self.block_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.trajectories {
            let mut rec = vec![
                r.run_id.clone(),
                r.label.to_string(),
                r.final_accuracy.to_string(),
                r.epoch.to_string(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<trajectories csv>", e))?;
        Ok(())
    }

    pub fn write_group_means_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string(), "epoch".into(), "runs".into()];
        header.extend(self.block_names.iter().cloned());
        w.write_record(&header)?;
        for g in &self.group_means {
            let mut rec = vec![g.label.to_string(), g.epoch.to_string(), g.runs.to_string()];
            rec.extend(g.means.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<group means csv>", e))?;
        Ok(())
    }
}
