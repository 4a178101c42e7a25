use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use epochgraph::corpus::{run_grid, untrained_series, CorpusManifest, RunStatus};
use epochgraph::graphgen::{build_graph, write_edge_list, Norm, Representation};
use epochgraph::predict::{feature_layout, feature_report, PredictorModel};
use epochgraph::tensorstore::{read_run, write_run, ArchitectureSpec, InputShape};

use crate::config::{ArchChoice, ExperimentConfig};
use crate::pipeline::{read_blocks, PipelineReport, MODEL_FILE, REPORT_FILE, SNAPSHOTS_FILE};

pub fn generate(config: &ExperimentConfig) -> anyhow::Result<CorpusManifest> {
    let g = &config.generate;
    let arch = g.architecture();
    log::info!(
        "training {} runs into {}",
        g.trainer.cell_count(),
        config.corpus.display()
    );
    let manifest = run_grid(&g.task, &arch, &g.trainer, config.seed, &config.corpus)?;
    let count = |s: RunStatus| manifest.runs.iter().filter(|r| r.status == s).count();
    let accs: Vec<f64> = manifest.usable_runs().map(|r| r.final_accuracy).collect();
    let lo = accs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("runs: {}", manifest.runs.len());
    println!(
        "completed: {}  early_stopped: {}  diverged: {}  failed: {}",
        count(RunStatus::Completed),
        count(RunStatus::EarlyStopped),
        count(RunStatus::Diverged),
        count(RunStatus::Failed)
    );
    if !accs.is_empty() {
        println!("final accuracy range: {lo:.4} .. {hi:.4}");
    }
    if count(RunStatus::Failed) > 0 {
        bail!("{} runs failed", count(RunStatus::Failed));
    }
    Ok(manifest)
}

/// Files written by [`report`].
pub const REPORT_OUTPUTS: [&str; 4] = ["trajectories.csv", "group_means.csv", "weights.csv", "curve.csv"];

/// Rebuilds trajectory, group-mean, weight-ranking and curve tables from a
/// pipeline output directory.
pub fn report(run_dir: &Path, out: Option<&Path>) -> anyhow::Result<PathBuf> {
    let need = |name: &str| -> anyhow::Result<PathBuf> {
        let p = run_dir.join(name);
        if !p.exists() {
            bail!("missing pipeline output {}", p.display());
        }
        Ok(p)
    };
    let report: PipelineReport = serde_json::from_str(&fs::read_to_string(need(REPORT_FILE)?)?)
        .context("parsing report.json")?;
    let model: PredictorModel = serde_json::from_str(&fs::read_to_string(need(MODEL_FILE)?)?)
        .context("parsing model.json")?;
    let (names, runs) = read_blocks(&need(SNAPSHOTS_FILE)?)?;
    if names != report.block_names {
        bail!("snapshots.csv columns do not match report.json block names");
    }
    let feature_spec = report.pipeline.feature_spec()?;
    let layout = feature_layout(&feature_spec, &names);
    let accuracies: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
    let threshold = report.pipeline.threshold.resolve()?.resolve(&accuracies)?;
    let features = feature_report(&model, &layout, &runs, &names, threshold)?;

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join("report"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let create = |name: &str| -> anyhow::Result<BufWriter<fs::File>> {
        let p = out.join(name);
        Ok(BufWriter::new(
            fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    };
    features.write_trajectories_csv(create(REPORT_OUTPUTS[0])?)?;
    features.write_group_means_csv(create(REPORT_OUTPUTS[1])?)?;
    features.write_weights_csv(create(REPORT_OUTPUTS[2])?)?;
    report.eval.write_curve_csv(create(REPORT_OUTPUTS[3])?)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub run_id: String,
    pub epoch: u32,
    pub representation: Representation,
    pub partitions: Vec<usize>,
    pub nodes: usize,
    pub edges: usize,
}

impl GraphSummary {
    pub fn to_text(&self) -> String {
        let parts: Vec<String> = self.partitions.iter().map(|p| p.to_string()).collect();
        format!(
            "run: {}\nepoch: {}\nrepresentation: {}\npartitions: {}\nnodes: {}\nedges: {}\n",
            self.run_id,
            self.epoch,
            self.representation,
            parts.join(","),
            self.nodes,
            self.edges
        )
    }
}

/// Builds one checkpoint's graph and reports its size; optionally writes the
/// edge list.
pub fn inspect_graph(
    run_dir: &Path,
    epoch: Option<u32>,
    representation: Representation,
    norm: Norm,
    export: Option<&Path>,
) -> anyhow::Result<GraphSummary> {
    let series = read_run(run_dir).with_context(|| format!("reading run {}", run_dir.display()))?;
    let ckpt = match epoch {
        Some(e) => series
            .checkpoint(e)
            .with_context(|| format!("run {} has no epoch {e}", series.run_id))?,
        None => series.epochs.last().context("run has no checkpoints")?,
    };
    let g = build_graph(ckpt, &series.arch, representation, norm)?;
    if let Some(path) = export {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_edge_list(&g, BufWriter::new(file))?;
    }
    Ok(GraphSummary {
        run_id: series.run_id.clone(),
        epoch: ckpt.epoch,
        representation,
        nodes: g.node_count(),
        edges: g.edge_count(),
        partitions: g.partitions,
    })
}

/// Writes a one-epoch series with freshly initialized weights.
pub fn init_run(
    arch: ArchChoice,
    input: InputShape,
    classes: usize,
    seed: u64,
    run_id: &str,
    out: &Path,
) -> anyhow::Result<()> {
    let spec = match arch {
        ArchChoice::Toy => ArchitectureSpec::toy(input, classes),
        ArchChoice::Lenet5 => ArchitectureSpec::lenet5(input, classes),
    };
    let series = untrained_series(&spec, seed, run_id)?;
    write_run(&series, out)?;
    Ok(())
}

/// Parses `CxHxW`.
pub fn parse_input_shape(s: &str) -> anyhow::Result<InputShape> {
    let dims: Vec<usize> = s
        .split(['x', 'X'])
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("input shape {s:?} is not CxHxW"))?;
    match dims[..] {
        [c, h, w] => Ok(InputShape::new(c, h, w)),
        _ => bail!("input shape {s:?} is not CxHxW"),
    }
}
