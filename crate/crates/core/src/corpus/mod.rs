//! Synthetic training corpus: a small image-classification task, a plain SGD
//! trainer for conv + fc networks, and a hyperparameter grid runner that
//! writes one checkpoint series per cell.

mod net;
mod task;

pub use net::{LayerParams, Network, Trace};
pub use task::{generate_task, Dataset, Split, SyntheticTask, TEMPLATE_COUNT};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::{label_for, Label, Threshold};
use crate::tensorstore::{
    read_run, write_run, ArchitectureSpec, CheckpointSeries, EpochCheckpoint, Hyperparams,
    LayerKind,
};

pub const CORPUS_MANIFEST: &str = "corpus.json";
pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub seeds_per_cell: usize,
    pub max_epochs: u32,
    pub batch_size: usize,
    pub patience: u32,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            dropouts: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            seeds_per_cell: 3,
            max_epochs: 20,
            batch_size: 64,
            patience: 5,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.dropouts.is_empty() || self.seeds_per_cell == 0 {
            return Err(Error::InvalidParameter(
                "learning-rate grid, dropout grid and seeds per cell must be nonempty".into(),
            ));
        }
        if self.learning_rates.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return Err(Error::InvalidParameter("learning rates must be finite and >= 0".into()));
        }
        if self.dropouts.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::InvalidParameter("dropout rates must lie in [0, 1)".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("max_epochs and batch_size must be >= 1".into()));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(Error::InvalidParameter(format!(
                "patience {} must lie in 1..={}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.learning_rates.len() * self.dropouts.len() * self.seeds_per_cell
    }

    /// `(lr, dropout, replica)` of a cell; learning rate varies slowest.
    pub fn cell(&self, index: usize) -> (f64, f64, usize) {
        let replica = index % self.seeds_per_cell;
        let rest = index / self.seeds_per_cell;
        let dropout = self.dropouts[rest % self.dropouts.len()];
        let lr = self.learning_rates[rest / self.dropouts.len()];
        (lr, dropout, replica)
    }
}

/// Tracks the early-stopping rule: stop once `patience` consecutive epochs
/// pass without a strict improvement over the best accuracy so far.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    patience: u32,
    best: f64,
    since: u32,
}

impl EarlyStop {
    pub fn new(patience: u32) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            since: 0,
        }
    }

    /// Records one epoch; returns true when training should stop.
    pub fn observe(&mut self, accuracy: f64) -> bool {
        if accuracy > self.best {
            self.best = accuracy;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.since >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Ran to `max_epochs`.
    Completed,
    EarlyStopped,
    /// Loss or parameters went non-finite; the last checkpoint holds the last
    /// finite parameters.
    Diverged,
    /// Training raised an error; no series was written.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub series: CheckpointSeries,
    pub status: RunStatus,
}

/// `arch` with `dropout` set on every fc layer except the output layer.
pub fn with_hidden_dropout(arch: &ArchitectureSpec, dropout: f64) -> ArchitectureSpec {
    let last = arch.learnable_layers().last().copied();
    let mut out = arch.clone();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        if matches!(layer.kind, LayerKind::Fc { .. }) && Some(i) != last {
            layer.dropout = dropout;
        }
    }
    out
}

fn accuracy(net: &Network, split: &Split) -> f64 {
    let correct = (0..split.len())
        .filter(|&i| net.predict(split.image(i)) == split.labels[i])
        .count();
    correct as f64 / split.len().max(1) as f64
}

/// Minibatch SGD with softmax cross-entropy, checkpointing every epoch.
pub fn train_run(
    data: &Dataset,
    arch: &ArchitectureSpec,
    lr: f64,
    dropout: f64,
    seed: u64,
    config: &TrainerConfig,
    run_id: &str,
) -> Result<TrainOutcome> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::InvalidParameter(format!("learning rate {lr}")));
    }
    let arch = with_hidden_dropout(arch, dropout);
    let mut rng = crate::rng(seed);
    let mut net = Network::init(&arch, &mut rng)?;
    if net.input_len() != data.train.pixel_len || net.classes() != data.classes {
        return Err(Error::Shape(format!(
            "architecture expects {} inputs and {} classes, task has {} and {}",
            net.input_len(),
            net.classes(),
            data.train.pixel_len,
            data.classes
        )));
    }
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut stopper = EarlyStop::new(config.patience);
    let mut epochs = Vec::new();
    let mut status = RunStatus::Completed;
    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut diverged = false;
        for batch in order.chunks(config.batch_size) {
            let mut grads = net.zero_grads();
            let mut loss = 0.0;
            for &i in batch {
                let trace = net.forward(data.train.image(i), Some(&mut rng));
                loss += net.backward(&trace, data.train.labels[i], &mut grads);
            }
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            let backup = net.params.clone();
            net.apply(&grads, lr / batch.len() as f64);
            if !net.is_finite() {
                net.params = backup;
                diverged = true;
                break;
            }
        }
        let test_accuracy = accuracy(&net, &data.test);
        epochs.push(EpochCheckpoint {
            epoch,
            tensors: net.weight_tensors()?,
            test_accuracy,
        });
        if diverged {
            log::debug!("{run_id}: diverged in epoch {epoch} at lr {lr}");
            status = RunStatus::Diverged;
            break 'epochs;
        }
        if stopper.observe(test_accuracy) {
            if epoch < config.max_epochs {
                status = RunStatus::EarlyStopped;
            }
            break;
        }
    }
    let last = epochs.last().expect("at least one epoch runs");
    let series = CheckpointSeries {
        run_id: run_id.to_string(),
        arch,
        hyperparams: Hyperparams {
            learning_rate: lr,
            dropout,
            seed,
        },
        final_accuracy: last.test_accuracy,
        early_stop_epoch: last.epoch,
        epochs,
    };
    series.validate()?;
    Ok(TrainOutcome { series, status })
}

/// A single-epoch series holding freshly initialized weights.
pub fn untrained_series(arch: &ArchitectureSpec, seed: u64, run_id: &str) -> Result<CheckpointSeries> {
    let net = Network::init(arch, &mut crate::rng(seed))?;
    let series = CheckpointSeries {
        run_id: run_id.to_string(),
        arch: arch.clone(),
        hyperparams: Hyperparams {
            learning_rate: 0.0,
            dropout: 0.0,
            seed,
        },
        epochs: vec![EpochCheckpoint {
            epoch: 1,
            tensors: net.weight_tensors()?,
            test_accuracy: 0.0,
        }],
        final_accuracy: 0.0,
        early_stop_epoch: 1,
    };
    series.validate()?;
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: String,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
    pub final_accuracy: f64,
    pub early_stop_epoch: u32,
    /// Run directory relative to the corpus root.
    pub path: String,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub task: SyntheticTask,
    pub arch: ArchitectureSpec,
    pub trainer: TrainerConfig,
    pub runs: Vec<RunEntry>,
}

impl CorpusManifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(CORPUS_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if manifest.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::Manifest {
                path,
                message: format!("unsupported schema version {}", manifest.schema_version),
            });
        }
        Ok(manifest)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(CORPUS_MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Runs that produced checkpoints.
    pub fn usable_runs(&self) -> impl Iterator<Item = &RunEntry> {
        self.runs.iter().filter(|r| r.status != RunStatus::Failed)
    }

    pub fn run_dir(&self, root: &Path, entry: &RunEntry) -> PathBuf {
        root.join(&entry.path)
    }

    pub fn load_run(&self, root: &Path, entry: &RunEntry) -> Result<CheckpointSeries> {
        read_run(&self.run_dir(root, entry))
    }
}

/// Seed of grid cell `index`, drawn from its own ChaCha stream.
pub fn cell_seed(global_seed: u64, index: usize) -> u64 {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(global_seed);
    r.set_stream(index as u64 + 1);
    r.gen()
}

pub fn run_id(index: usize) -> String {
    format!("run_{index:04}")
}

/// Trains one cell of the grid.
pub fn run_cell(
    data: &Dataset,
    arch: &ArchitectureSpec,
    config: &TrainerConfig,
    global_seed: u64,
    index: usize,
) -> Result<TrainOutcome> {
    let (lr, dropout, _) = config.cell(index);
    train_run(data, arch, lr, dropout, cell_seed(global_seed, index), config, &run_id(index))
}

/// Trains every cell of the grid in parallel and writes the corpus under
/// `root`. Failed cells are recorded in the manifest and skipped.
pub fn run_grid(
    task: &SyntheticTask,
    arch: &ArchitectureSpec,
    config: &TrainerConfig,
    global_seed: u64,
    root: &Path,
) -> Result<CorpusManifest> {
    config.validate()?;
    let data = generate_task(task)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let runs: Vec<RunEntry> = (0..config.cell_count())
        .into_par_iter()
        .map(|index| {
            let (lr, dropout, _) = config.cell(index);
            let seed = cell_seed(global_seed, index);
            let id = run_id(index);
            let written = run_cell(&data, arch, config, global_seed, index)
                .and_then(|o| write_run(&o.series, &root.join(&id)).map(|_| o));
            match written {
                Ok(o) => RunEntry {
                    run_id: id.clone(),
                    lr,
                    dropout,
                    seed,
                    final_accuracy: o.series.final_accuracy,
                    early_stop_epoch: o.series.early_stop_epoch,
                    path: id,
                    status: o.status,
                },
                Err(e) => {
                    log::warn!("{id}: {e}");
                    RunEntry {
                        run_id: id.clone(),
                        lr,
                        dropout,
                        seed,
                        final_accuracy: 0.0,
                        early_stop_epoch: 0,
                        path: id,
                        status: RunStatus::Failed,
                    }
                }
            }
        })
        .collect();
    let manifest = CorpusManifest {
        schema_version: CORPUS_SCHEMA_VERSION,
        seed: global_seed,
        task: task.clone(),
        arch: arch.clone(),
        trainer: config.clone(),
        runs,
    };
    manifest.save(root)?;
    Ok(manifest)
}

/// Draws `per_class` runs from each side of `threshold`, without
/// replacement. The output keeps manifest order.
pub fn balanced_subsample(
    runs: &[RunEntry],
    per_class: usize,
    threshold: Threshold,
    seed: u64,
) -> Result<Vec<RunEntry>> {
    let accuracies: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
    let t = threshold.resolve(&accuracies)?;
    let mut rng = crate::rng(seed);
    let mut keep = Vec::new();
    for label in [Label::Low, Label::High] {
        let mut idx: Vec<usize> = (0..runs.len())
            .filter(|&i| label_for(runs[i].final_accuracy, t) == label)
            .collect();
        if idx.len() < per_class {
            return Err(Error::InvalidParameter(format!(
                "only {} {label} runs available, {per_class} requested",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..per_class]);
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| runs[i].clone()).collect())
}
