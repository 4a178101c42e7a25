//! Declarative experiment configuration (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use epochgraph::centrality::{EigenOptions, FeatureKind};
use epochgraph::corpus::{SyntheticTask, TrainerConfig};
use epochgraph::graphgen::{Norm, Representation};
use epochgraph::pipeline::{SignedPart, SnapshotSpec};
use epochgraph::predict::{FeatureSpec, MlpConfig, ModelConfig, OlsConfig, SvmConfig, Task, Threshold};
use epochgraph::signature::SignatureMode;
use epochgraph::tensorstore::{ArchitectureSpec, InputShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Corpus directory; relative paths resolve against the config file.
    pub corpus: PathBuf,
    /// Pipeline output directory; relative paths resolve against the config file.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchChoice {
    #[default]
    Toy,
    Lenet5,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub arch: ArchChoice,
    pub task: SyntheticTask,
    pub trainer: TrainerConfig,
}

impl GenerateSection {
    pub fn architecture(&self) -> ArchitectureSpec {
        let input = InputShape::new(self.task.channels, self.task.height, self.task.width);
        match self.arch {
            ArchChoice::Toy => ArchitectureSpec::toy(input, self.task.classes),
            ArchChoice::Lenet5 => ArchitectureSpec::lenet5(input, self.task.classes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Concat,
    LinearWeighted,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputChoice {
    /// Signature over epochs `1..=t`.
    #[default]
    Prefix,
    /// Two epochs `window[0]` and `window[1]` side by side.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorChoice {
    #[default]
    LinearSvm,
    Mlp,
    Ols,
}

/// `"median"` or an accuracy in percent (e.g. `40`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Percent(f64),
    Keyword(String),
}

impl Default for ThresholdSetting {
    fn default() -> Self {
        ThresholdSetting::Keyword("median".into())
    }
}

impl ThresholdSetting {
    pub fn resolve(&self) -> anyhow::Result<Threshold> {
        match self {
            ThresholdSetting::Percent(p) if p.is_finite() && (0.0..=100.0).contains(p) => {
                Ok(Threshold::Fixed(p / 100.0))
            }
            ThresholdSetting::Percent(p) => bail!("threshold {p} is not a percentage in [0, 100]"),
            ThresholdSetting::Keyword(k) if k == "median" => Ok(Threshold::Median),
            ThresholdSetting::Keyword(k) => bail!("threshold must be \"median\" or a percentage, got {k:?}"),
        }
    }
}

impl fmt::Display for ThresholdSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSetting::Percent(p) => write!(f, "{p}%"),
            ThresholdSetting::Keyword(k) => f.write_str(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub representation: Representation,
    pub signed_part: SignedPart,
    pub feature: FeatureKind,
    pub norm: Norm,
    pub mode: ModeChoice,
    /// Smoothing factor for `mode = "exponential"`.
    pub alpha: f64,
    pub input: InputChoice,
    /// Epoch budget for prefix input.
    pub t: usize,
    /// First and last epoch for window input.
    pub window: [u32; 2],
    /// When set, also sweep the budget from 1 up to this many epochs.
    pub max_budget: Option<usize>,
    pub task: Task,
    pub threshold: ThresholdSetting,
    pub predictor: PredictorChoice,
    pub folds: usize,
    /// Repeat the last snapshot of early-stopped runs up to the needed length.
    pub pad_short_runs: bool,
    /// Draw this many runs per label before evaluating; all runs when unset.
    pub subsample_per_class: Option<usize>,
    /// Also evaluate with permuted labels (classification only).
    pub shuffled_baseline: bool,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
    pub ols: OlsConfig,
    pub eigen: EigenOptions,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            representation: Representation::Rolled,
            signed_part: SignedPart::Base,
            feature: FeatureKind::Degree,
            norm: Norm::L2,
            mode: ModeChoice::Concat,
            alpha: 0.5,
            input: InputChoice::Prefix,
            t: 5,
            window: [3, 5],
            max_budget: None,
            task: Task::Classify,
            threshold: ThresholdSetting::default(),
            predictor: PredictorChoice::LinearSvm,
            folds: 5,
            pad_short_runs: true,
            subsample_per_class: None,
            shuffled_baseline: true,
            svm: SvmConfig::default(),
            mlp: MlpConfig::default(),
            ols: OlsConfig::default(),
            eigen: EigenOptions {
                tol: 1e-8,
                max_iter: 10_000,
            },
        }
    }
}

impl PipelineSection {
    pub fn validate(&self) -> anyhow::Result<()> {
        self.snapshot_spec().validate()?;
        self.feature_spec()?;
        self.threshold.resolve()?;
        if self.folds < 2 {
            bail!("folds must be >= 2");
        }
        match (self.task, self.predictor) {
            (Task::Classify, PredictorChoice::Ols) => {
                bail!("task \"classify\" needs predictor \"linear_svm\" or \"mlp\"")
            }
            (Task::Regress, PredictorChoice::LinearSvm | PredictorChoice::Mlp) => {
                bail!("task \"regress\" needs predictor \"ols\"")
            }
            _ => {}
        }
        if let Some(max) = self.max_budget {
            if max < self.feature_spec()?.last_epoch() {
                bail!("max_budget {max} is below the evaluated budget");
            }
        }
        Ok(())
    }

    pub fn snapshot_spec(&self) -> SnapshotSpec {
        SnapshotSpec {
            representation: self.representation,
            part: self.signed_part,
            feature: self.feature,
            norm: self.norm,
            eigen: self.eigen,
        }
    }

    pub fn signature_mode(&self) -> anyhow::Result<SignatureMode> {
        Ok(match self.mode {
            ModeChoice::Concat => SignatureMode::Concat,
            ModeChoice::LinearWeighted => SignatureMode::LinearWeighted,
            ModeChoice::Exponential => {
                if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                    bail!("alpha {} must lie in (0, 1]", self.alpha);
                }
                SignatureMode::Exponential { alpha: self.alpha }
            }
        })
    }

    pub fn feature_spec(&self) -> anyhow::Result<FeatureSpec> {
        match self.input {
            InputChoice::Prefix => {
                if self.t == 0 {
                    bail!("epoch budget t must be >= 1");
                }
                Ok(FeatureSpec::Prefix {
                    t: self.t,
                    mode: self.signature_mode()?,
                })
            }
            InputChoice::Window => {
                let [start, end] = self.window;
                if start == 0 || end <= start {
                    bail!("window [{start}, {end}] needs 1 <= start < end");
                }
                Ok(FeatureSpec::Window { start, end })
            }
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        match self.predictor {
            PredictorChoice::LinearSvm => ModelConfig::LinearSvm(self.svm),
            PredictorChoice::Mlp => ModelConfig::Mlp(self.mlp),
            PredictorChoice::Ols => ModelConfig::Ols(self.ols),
        }
    }

    /// Epochs each run must supply.
    pub fn epochs_needed(&self) -> anyhow::Result<usize> {
        let evaluated = self.feature_spec()?.last_epoch();
        Ok(self.max_budget.unwrap_or(evaluated).max(evaluated))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.pipeline.validate()?;
        config.generate.trainer.validate()?;
        Ok(config)
    }

    /// Loads a config and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config =
            Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.corpus.is_relative() {
            config.corpus = base.join(&config.corpus);
        }
        if config.output.is_relative() {
            config.output = base.join(&config.output);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
