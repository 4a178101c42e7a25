//! Per-snapshot statistical summaries and their temporal composition.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::centrality::{FeatureKind, NodeFeatureVector};
use crate::error::{Error, Result};
use crate::graphgen::Representation;

/// Number of aggregators in one snapshot summary.
pub const STATS: usize = 5;
pub const STAT_NAMES: [&str; STATS] = ["median", "mean", "std", "skewness", "kurtosis"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotSignature {
    pub epoch: u32,
    /// median, mean, population std, skewness, non-excess kurtosis
    pub stats: [f64; STATS],
}

/// Summarizes a node-feature distribution.
///
/// Median is the lower median for even counts. Moments are population
/// moments; when the variance is zero, skewness and kurtosis are 0.
pub fn snapshot_signature(features: &NodeFeatureVector, epoch: u32) -> Result<SnapshotSignature> {
    Ok(SnapshotSignature {
        epoch,
        stats: summarize(&features.values)?,
    })
}

pub fn summarize(values: &[f64]) -> Result<[f64; STATS]> {
    if values.is_empty() {
        return Err(Error::Empty("node feature vector".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("node feature vector has non-finite values".into()));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    Ok([median, mean, m2.sqrt(), skew, kurt])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SignatureMode {
    Concat,
    LinearWeighted,
    Exponential { alpha: f64 },
}

impl SignatureMode {
    pub fn exponential_default() -> Self {
        SignatureMode::Exponential { alpha: 0.5 }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            SignatureMode::Exponential { alpha } => Some(*alpha),
            _ => None,
        }
    }
}

impl fmt::Display for SignatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignatureMode::Concat => f.write_str("concat"),
            SignatureMode::LinearWeighted => f.write_str("linear_weighted"),
            SignatureMode::Exponential { alpha } => write!(f, "exponential_{alpha}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSignature {
    pub run_id: String,
    pub feature_kind: FeatureKind,
    pub representation: Representation,
    pub mode: SignatureMode,
    /// Values per epoch block (5, or 10 for concatenated signed parts).
    pub block_width: usize,
    pub vector: Vec<f64>,
}

impl TemporalSignature {
    pub fn epochs(&self) -> usize {
        self.vector.len() / self.block_width
    }
}

/// Composes per-epoch blocks (all of equal width) into one vector.
///
/// * concat: `s1 ⊕ … ⊕ st`
/// * linear weighted: block τ is `Σ_{j≤τ} j·s_j / Σ_{j≤τ} j`
/// * exponential: block τ is `α·s_τ + (1−α)·ŝ_{τ−1}`, `ŝ_1 = s_1`
pub fn compose_blocks(blocks: &[Vec<f64>], mode: SignatureMode) -> Result<Vec<f64>> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::Empty("no snapshot signatures to compose".into()))?;
    let width = first.len();
    if width == 0 || blocks.iter().any(|b| b.len() != width) {
        return Err(Error::Validation(
            "snapshot blocks must be nonempty and of equal width".into(),
        ));
    }
    if let SignatureMode::Exponential { alpha } = mode {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exponential alpha {alpha} outside (0, 1]"
            )));
        }
    }
    let mut out = Vec::with_capacity(width * blocks.len());
    match mode {
        SignatureMode::Concat => {
            for b in blocks {
                out.extend_from_slice(b);
            }
        }
        SignatureMode::LinearWeighted => {
            let mut weighted = vec![0.0; width];
            let mut total = 0.0;
            for (j, b) in blocks.iter().enumerate() {
                let w = (j + 1) as f64;
                total += w;
                for (acc, v) in weighted.iter_mut().zip(b) {
                    *acc += w * v;
                }
                out.extend(weighted.iter().map(|acc| acc / total));
            }
        }
        SignatureMode::Exponential { alpha } => {
            let mut smoothed = first.clone();
            out.extend_from_slice(first);
            for b in &blocks[1..] {
                if alpha == 1.0 {
                    smoothed.copy_from_slice(b);
                } else {
                    for (s, v) in smoothed.iter_mut().zip(b) {
                        *s = alpha * v + (1.0 - alpha) * *s;
                    }
                }
                out.extend_from_slice(&smoothed);
            }
        }
    }
    Ok(out)
}

fn check_order(snapshots: &[SnapshotSignature]) -> Result<()> {
    for pair in snapshots.windows(2) {
        if pair[1].epoch != pair[0].epoch + 1 {
            return Err(Error::Validation(format!(
                "snapshots must be consecutive epochs; found {} after {}",
                pair[1].epoch, pair[0].epoch
            )));
        }
    }
    Ok(())
}

pub fn temporal_signature(
    run_id: &str,
    feature_kind: FeatureKind,
    representation: Representation,
    snapshots: &[SnapshotSignature],
    mode: SignatureMode,
) -> Result<TemporalSignature> {
    temporal_signature_parts(run_id, feature_kind, representation, &[snapshots], mode)
}

/// Like [`temporal_signature`] but concatenates the per-epoch summaries of
/// several graphs (e.g. positive and negative subgraphs) before composing.
pub fn temporal_signature_parts(
    run_id: &str,
    feature_kind: FeatureKind,
    representation: Representation,
    parts: &[&[SnapshotSignature]],
    mode: SignatureMode,
) -> Result<TemporalSignature> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Empty("no signature parts".into()))?;
    if first.is_empty() {
        return Err(Error::Empty("no snapshot signatures to compose".into()));
    }
    for part in parts {
        check_order(part)?;
        if part.len() != first.len()
            || part.iter().zip(first.iter()).any(|(a, b)| a.epoch != b.epoch)
        {
            return Err(Error::Validation(
                "signature parts cover different epochs".into(),
            ));
        }
    }
    let blocks: Vec<Vec<f64>> = (0..first.len())
        .map(|i| parts.iter().flat_map(|p| p[i].stats).collect())
        .collect();
    let vector = compose_blocks(&blocks, mode)?;
    Ok(TemporalSignature {
        run_id: run_id.to_string(),
        feature_kind,
        representation,
        mode,
        block_width: STATS * parts.len(),
        vector,
    })
}

/// Concatenates the summary blocks of two epochs (`s_start ⊕ s_end`), the
/// input used for windowed regression.
pub fn window_blocks(blocks: &[Vec<f64>], first_epoch: u32, start: u32, end: u32) -> Result<Vec<f64>> {
    if start > end || start < first_epoch {
        return Err(Error::InvalidParameter(format!(
            "window {start}..{end} invalid for series starting at epoch {first_epoch}"
        )));
    }
    let at = |epoch: u32| {
        blocks
            .get((epoch - first_epoch) as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("window epoch {epoch} not available")))
    };
    let mut out = at(start)?.clone();
    out.extend_from_slice(at(end)?);
    Ok(out)
}

/// One row of the signature matrix interchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRow {
    pub run_id: String,
    pub label: Option<String>,
    pub final_accuracy: f64,
    pub features: Vec<f64>,
}

/// Writes `run_id,label,final_accuracy,f_1..f_n`.
pub fn write_signature_csv<W: Write>(rows: &[SignatureRow], out: W) -> Result<()> {
    let width = rows.first().map(|r| r.features.len()).unwrap_or(0);
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["run_id".to_string(), "label".into(), "final_accuracy".into()];
    header.extend((1..=width).map(|i| format!("f_{i}")));
    writer.write_record(&header)?;
    for row in rows {
        if row.features.len() != width {
            return Err(Error::Validation(format!(
                "signature row {} has {} features, expected {width}",
                row.run_id,
                row.features.len()
            )));
        }
        let mut record = vec![
            row.run_id.clone(),
            row.label.clone().unwrap_or_default(),
            row.final_accuracy.to_string(),
        ];
        record.extend(row.features.iter().map(f64::to_string));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io("<signature csv>", e))?;
    Ok(())
}

pub fn read_signature_csv<R: std::io::Read>(input: R) -> Result<Vec<SignatureRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad number {s:?} in signature csv")))
        };
        if record.len() < 3 {
            return Err(Error::Validation("signature csv row too short".into()));
        }
        let label = match &record[1] {
            "" => None,
            l => Some(l.to_string()),
        };
        rows.push(SignatureRow {
            run_id: record[0].to_string(),
            label,
            final_accuracy: parse(&record[2])?,
            features: record.iter().skip(3).map(parse).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}
