//! Checkpoint → graph → node features → per-epoch summary blocks.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centrality::{node_features, EigenOptions, FeatureKind};
use crate::corpus::{CorpusManifest, RunEntry};
use crate::error::{Error, Result};
use crate::graphgen::{build_graph, split_signed, LayeredGraph, Norm, Representation};
use crate::predict::RunSnapshots;
use crate::signature::{summarize, STAT_NAMES};
use crate::tensorstore::{ArchitectureSpec, CheckpointSeries, EpochCheckpoint};

/// Which edges of a signed graph feed the node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignedPart {
    #[default]
    Base,
    Pos,
    Neg,
    /// Positive and negative subgraph summaries side by side.
    PosNegConcat,
}

impl fmt::Display for SignedPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignedPart::Base => "base",
            SignedPart::Pos => "pos",
            SignedPart::Neg => "neg",
            SignedPart::PosNegConcat => "pos_neg_concat",
        })
    }
}

impl FromStr for SignedPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(SignedPart::Base),
            "pos" => Ok(SignedPart::Pos),
            "neg" => Ok(SignedPart::Neg),
            "pos_neg_concat" => Ok(SignedPart::PosNegConcat),
            other => Err(Error::InvalidParameter(format!("unknown signed part {other:?}"))),
        }
    }
}

/// Everything that determines one epoch's summary block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSpec {
    pub representation: Representation,
    pub part: SignedPart,
    pub feature: FeatureKind,
    pub norm: Norm,
    pub eigen: EigenOptions,
}

impl SnapshotSpec {
    pub fn new(representation: Representation, feature: FeatureKind) -> Self {
        Self {
            representation,
            part: SignedPart::Base,
            feature,
            norm: Norm::default(),
            eigen: EigenOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.part != SignedPart::Base && self.representation != Representation::Unrolled {
            return Err(Error::InvalidParameter(format!(
                "signed part {} needs the unrolled representation (got {})",
                self.part, self.representation
            )));
        }
        Ok(())
    }

    pub fn block_names(&self) -> Vec<String> {
        match self.part {
            SignedPart::PosNegConcat => ["pos", "neg"]
                .iter()
                .flat_map(|p| STAT_NAMES.iter().map(move |s| format!("{p}_{s}")))
                .collect(),
            _ => STAT_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn block_width(&self) -> usize {
        self.block_names().len()
    }

    /// Short name for cache files.
    pub fn key(&self) -> String {
        let mut key = format!("{}_{}_{}_{}", self.representation, self.part, self.feature, self.norm);
        if self.feature == FeatureKind::Eigenvector {
            key.push_str(&format!("_tol{:e}_it{}", self.eigen.tol, self.eigen.max_iter));
        }
        key.replace(['.', '+'], "p")
    }
}

fn summary(g: &LayeredGraph, spec: &SnapshotSpec) -> Result<Vec<f64>> {
    let features = node_features(g, spec.feature, spec.eigen)?;
    Ok(summarize(&features.values)?.to_vec())
}

/// Summary block of one checkpoint.
pub fn snapshot_block(
    ckpt: &EpochCheckpoint,
    arch: &ArchitectureSpec,
    spec: &SnapshotSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let g = build_graph(ckpt, arch, spec.representation, spec.norm)?;
    match spec.part {
        SignedPart::Base => summary(&g, spec),
        part => {
            let split = split_signed(&g);
            drop(g);
            match part {
                SignedPart::Pos => summary(&split.positive, spec),
                SignedPart::Neg => summary(&split.negative, spec),
                _ => {
                    let mut block = summary(&split.positive, spec)?;
                    block.extend(summary(&split.negative, spec)?);
                    Ok(block)
                }
            }
        }
    }
}

/// Blocks for the first `limit` epochs of a run (all epochs when `None`).
pub fn series_blocks(
    series: &CheckpointSeries,
    spec: &SnapshotSpec,
    limit: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    let take = limit.unwrap_or(usize::MAX);
    series
        .epochs
        .iter()
        .take(take)
        .map(|ckpt| snapshot_block(ckpt, &series.arch, spec))
        .collect()
}

/// Extends a run that stopped early by repeating its last block, so every
/// run offers `len` epochs.
pub fn pad_blocks(blocks: &mut Vec<Vec<f64>>, len: usize) {
    if let Some(last) = blocks.last().cloned() {
        while blocks.len() < len {
            blocks.push(last.clone());
        }
    }
}

/// Computes blocks for every listed run of a corpus in parallel. Output
/// order follows `runs`.
pub fn corpus_snapshots(
    root: &Path,
    manifest: &CorpusManifest,
    runs: &[RunEntry],
    spec: &SnapshotSpec,
    limit: Option<usize>,
) -> Result<Vec<RunSnapshots>> {
    spec.validate()?;
    runs.par_iter()
        .map(|entry| {
            let series = manifest.load_run(root, entry)?;
            let blocks = series_blocks(&series, spec, limit).map_err(|e| {
                Error::Validation(format!("run {}: {e}", entry.run_id))
            })?;
            Ok(RunSnapshots {
                run_id: entry.run_id.clone(),
                final_accuracy: series.final_accuracy,
                blocks,
            })
        })
        .collect()
}
