//! `pipeline` subcommand: corpus → snapshot blocks (cached) → signatures →
//! cross-validated predictor and report files.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use epochgraph::corpus::{balanced_subsample, CorpusManifest, RunEntry, CORPUS_MANIFEST};
use epochgraph::pipeline::{corpus_snapshots, pad_blocks, SnapshotSpec};
use epochgraph::predict::{
    build_dataset, cross_validate, epoch_budget_curve, feature_layout, feature_report, rank_weights,
    EvalReport, FeatureName, RunSnapshots, Task,
};
use epochgraph::signature::{write_signature_csv, SignatureRow};
use epochgraph::tensorstore::MANIFEST_FILE;

use crate::config::{ExperimentConfig, PipelineSection};

pub const REPORT_FILE: &str = "report.json";
pub const MODEL_FILE: &str = "model.json";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub corpus_hash: String,
    pub seed: u64,
    pub pipeline: PipelineSection,
    pub runs: usize,
    /// Runs shorter than the needed epoch count that were padded.
    pub padded_runs: Vec<String>,
    pub block_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub eval: EvalReport,
    pub shuffled_label_accuracy: Option<f64>,
}

/// SHA-256 over the corpus manifest and every run manifest, in run order.
pub fn corpus_hash(root: &Path, manifest: &CorpusManifest) -> anyhow::Result<String> {
    let mut hasher = Sha256::new();
    let top = root.join(CORPUS_MANIFEST);
    hasher.update(fs::read(&top).with_context(|| format!("reading {}", top.display()))?);
    for entry in manifest.usable_runs() {
        let path = manifest.run_dir(root, entry).join(MANIFEST_FILE);
        hasher.update(fs::read(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CacheStamp {
    corpus_hash: String,
    spec: SnapshotSpec,
    runs: Vec<String>,
}

fn cache_paths(output: &Path, spec: &SnapshotSpec) -> (PathBuf, PathBuf) {
    let dir = output.join("cache");
    let key = spec.key();
    (dir.join(format!("{key}.csv")), dir.join(format!("{key}.json")))
}

fn write_cache(path: &Path, snaps: &[RunSnapshots], names: &[String]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run_id".to_string(), "final_accuracy".into(), "epoch".into()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for s in snaps {
        for (i, block) in s.blocks.iter().enumerate() {
            let mut rec = vec![s.run_id.clone(), s.final_accuracy.to_string(), (i + 1).to_string()];
            rec.extend(block.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads per-epoch blocks from the snapshot cache or `snapshots.csv`. Columns
/// are located by name; every column after `epoch` is a block entry.
pub fn read_blocks(path: &Path) -> anyhow::Result<(Vec<String>, Vec<RunSnapshots>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} lacks column {name}", path.display()))
    };
    let (id_col, acc_col, epoch_col) = (col("run_id")?, col("final_accuracy")?, col("epoch")?);
    let first_value = epoch_col + 1;
    let names: Vec<String> = header.iter().skip(first_value).map(String::from).collect();
    let mut out: Vec<RunSnapshots> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = &rec[id_col];
        let epoch: usize = rec[epoch_col].parse()?;
        let block = rec
            .iter()
            .skip(first_value)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()?;
        if out.last().map(|s| s.run_id.as_str()) != Some(id) {
            out.push(RunSnapshots {
                run_id: id.to_string(),
                final_accuracy: rec[acc_col].parse()?,
                blocks: Vec::new(),
            });
        }
        let run = out.last_mut().expect("just pushed");
        if epoch != run.blocks.len() + 1 {
            bail!("{}: run {id} epoch {epoch} out of order", path.display());
        }
        run.blocks.push(block);
    }
    Ok((names, out))
}

/// Snapshot blocks for all epochs of `runs`, reusing the cache when its stamp
/// matches the corpus and spec.
fn load_snapshots(
    root: &Path,
    manifest: &CorpusManifest,
    runs: &[RunEntry],
    spec: &SnapshotSpec,
    hash: &str,
    output: &Path,
    use_cache: bool,
) -> anyhow::Result<Vec<RunSnapshots>> {
    let (csv_path, stamp_path) = cache_paths(output, spec);
    let stamp = CacheStamp {
        corpus_hash: hash.to_string(),
        spec: *spec,
        runs: runs.iter().map(|r| r.run_id.clone()).collect(),
    };
    if use_cache && csv_path.exists() && stamp_path.exists() {
        let stored: Option<CacheStamp> = fs::read_to_string(&stamp_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        if stored.as_ref() == Some(&stamp) {
            match read_blocks(&csv_path) {
                Ok((_, snaps)) if snaps.len() == runs.len() => {
                    log::info!("reusing snapshot cache {}", csv_path.display());
                    return Ok(snaps);
                }
                Ok(_) => log::warn!("snapshot cache {} is incomplete; rebuilding", csv_path.display()),
                Err(e) => log::warn!("snapshot cache {} unreadable ({e}); rebuilding", csv_path.display()),
            }
        } else {
            log::warn!(
                "snapshot cache {} does not match this corpus or configuration; rebuilding",
                csv_path.display()
            );
        }
    }
    log::info!("computing {} snapshot blocks for {} runs", spec.key(), runs.len());
    let snaps = corpus_snapshots(root, manifest, runs, spec, None)?;
    if use_cache {
        fs::create_dir_all(csv_path.parent().expect("cache dir"))?;
        write_cache(&csv_path, &snaps, &spec.block_names())?;
        fs::write(&stamp_path, serde_json::to_string_pretty(&stamp)? + "\n")?;
    }
    Ok(snaps)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn evaluate(
    snaps: &[RunSnapshots],
    p: &PipelineSection,
    seed: u64,
    names: &[FeatureName],
) -> anyhow::Result<(EvalReport, Option<f64>)> {
    let feature_spec = p.feature_spec()?;
    let threshold = p.threshold.resolve()?;
    let model_config = p.model_config();
    let data = build_dataset(snaps, &feature_spec, threshold)?;
    let mut eval = cross_validate(&data, &model_config, p.folds, seed)?;
    if let Some(max_t) = p.max_budget {
        eval.curve = epoch_budget_curve(snaps, &feature_spec, threshold, &model_config, p.folds, seed, max_t)?.curve;
    }
    let mut weights = vec![0.0; eval.feature_weights.len()];
    for fw in &eval.feature_weights {
        weights[fw.index] = fw.weight;
    }
    if !weights.is_empty() {
        eval.feature_weights = rank_weights(&weights, Some(names));
    }
    let shuffled = if p.shuffled_baseline && model_config.task() == Task::Classify {
        let permuted = data.with_shuffled_labels(seed.wrapping_add(1));
        cross_validate(&permuted, &model_config, p.folds, seed)?.mean_accuracy
    } else {
        None
    };
    Ok((eval, shuffled))
}

/// Runs the full pipeline and writes its report files to `config.output`.
pub fn run_pipeline(config: &ExperimentConfig, use_cache: bool) -> anyhow::Result<PipelineReport> {
    let p = &config.pipeline;
    p.validate()?;
    let root = &config.corpus;
    let manifest = CorpusManifest::load(root)
        .with_context(|| format!("loading corpus {}", root.display()))?;
    let hash = corpus_hash(root, &manifest)?;
    let spec = p.snapshot_spec();
    let feature_spec = p.feature_spec()?;
    let threshold = p.threshold.resolve()?;
    let model_config = p.model_config();
    fs::create_dir_all(&config.output)
        .with_context(|| format!("creating {}", config.output.display()))?;

    let all_runs: Vec<RunEntry> = manifest.usable_runs().cloned().collect();
    let skipped = manifest.runs.len() - all_runs.len();
    if skipped > 0 {
        log::warn!("{skipped} failed runs in the corpus are ignored");
    }
    let mut snaps = load_snapshots(root, &manifest, &all_runs, &spec, &hash, &config.output, use_cache)
        .context("snapshot stage (graphs, node features, summaries)")?;
    if let Some(per_class) = p.subsample_per_class {
        let keep = balanced_subsample(&all_runs, per_class, threshold, config.seed)?;
        let ids: std::collections::HashSet<&str> = keep.iter().map(|r| r.run_id.as_str()).collect();
        snaps.retain(|s| ids.contains(s.run_id.as_str()));
    }

    let needed = p.epochs_needed()?;
    let mut padded_runs = Vec::new();
    if p.pad_short_runs {
        let full = needed.max(manifest.trainer.max_epochs as usize);
        for s in &mut snaps {
            if s.blocks.len() < needed {
                padded_runs.push(s.run_id.clone());
            }
            pad_blocks(&mut s.blocks, full);
        }
        if !padded_runs.is_empty() {
            log::info!("padded {} early-stopped runs past epoch {needed}", padded_runs.len());
        }
    }

    let block_names = spec.block_names();
    let names = feature_layout(&feature_spec, &block_names);
    let (eval, shuffled_label_accuracy) = evaluate(&snaps, p, config.seed, &names)
        .context("evaluation stage (signatures, predictor)")?;

    let data = build_dataset(&snaps, &feature_spec, threshold)?;
    let model = model_config.train(&data).context("training the full-data model")?;
    let features = feature_report(&model, &names, &snaps, &block_names, data.threshold)?;

    let report = PipelineReport {
        corpus_hash: hash,
        seed: config.seed,
        pipeline: p.clone(),
        runs: snaps.len(),
        padded_runs,
        block_names: block_names.clone(),
        feature_names: names.iter().map(|n| n.label()).collect(),
        eval,
        shuffled_label_accuracy,
    };

    let out = &config.output;
    fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(out.join(MODEL_FILE), serde_json::to_string_pretty(&model)? + "\n")?;
    report.eval.write_folds_csv(create(&out.join("folds.csv"))?)?;
    report.eval.write_curve_csv(create(&out.join("curve.csv"))?)?;
    features.write_weights_csv(create(&out.join("weights.csv"))?)?;
    features.write_trajectories_csv(create(&out.join(SNAPSHOTS_FILE))?)?;
    let rows: Vec<SignatureRow> = data
        .rows
        .iter()
        .map(|r| SignatureRow {
            run_id: r.run_id.clone(),
            label: Some(r.label.to_string()),
            final_accuracy: r.accuracy,
            features: r.features.clone(),
        })
        .collect();
    write_signature_csv(&rows, create(&out.join("signatures.csv"))?)?;
    Ok(report)
}
