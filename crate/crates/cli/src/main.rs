use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use epochgraph::graphgen::{Norm, Representation};
use epochgraph_cli::commands;
use epochgraph_cli::config::{ArchChoice, ExperimentConfig};
use epochgraph_cli::pipeline::run_pipeline;

#[derive(Parser)]
#[command(name = "epochgraph", version, about = "Graph signatures of training trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Toy,
    Lenet5,
}

impl From<ArchArg> for ArchChoice {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Toy => ArchChoice::Toy,
            ArchArg::Lenet5 => ArchChoice::Lenet5,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the hyperparameter grid and write a corpus.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the corpus directory from the config.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Compute signatures, cross-validate the predictor and write reports.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Recompute snapshot blocks even when a matching cache exists.
        #[arg(long)]
        no_cache: bool,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the prefix length.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Rebuild trajectory, group-mean and weight tables from pipeline output.
    Report {
        /// Pipeline output directory.
        run_dir: PathBuf,
        /// Destination directory (default `<run_dir>/report`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build one checkpoint's graph and print its size.
    InspectGraph {
        /// Run directory holding `manifest.json`.
        run_dir: PathBuf,
        /// Epoch to inspect (default: the last one).
        #[arg(long)]
        epoch: Option<u32>,
        #[arg(long, default_value = "rolled")]
        representation: Representation,
        #[arg(long, default_value = "l2")]
        norm: Norm,
        #[arg(long)]
        json: bool,
        /// Write the edge list to this file.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Write a single-checkpoint run with freshly initialized weights.
    InitRun {
        #[arg(long, value_enum, default_value = "lenet5")]
        arch: ArchArg,
        /// Input shape as CxHxW.
        #[arg(long, default_value = "3x32x32")]
        input: String,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "init")]
        run_id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { config, corpus } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(c) = corpus {
                cfg.corpus = c;
            }
            commands::generate(&cfg)?;
        }
        Command::Pipeline { config, no_cache, corpus, out, seed, t } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(c) = corpus {
                cfg.corpus = c;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = t {
                cfg.pipeline.t = t;
            }
            let report = run_pipeline(&cfg, !no_cache)?;
            let eval = &report.eval;
            println!("runs: {}", report.runs);
            println!("task: {}  model: {}", eval.task, eval.model);
            match eval.mean_accuracy {
                Some(a) => println!("cv accuracy: {a:.4}"),
                None => {
                    if let (Some(r2), Some(mae)) = (eval.mean_r2, eval.mean_mae) {
                        println!("cv r2: {r2:.4}  mae: {mae:.4}");
                    }
                }
            }
            if let Some(s) = report.shuffled_label_accuracy {
                println!("shuffled-label accuracy: {s:.4}");
            }
            println!("output: {}", cfg.output.display());
        }
        Command::Report { run_dir, out } => {
            let dir = commands::report(&run_dir, out.as_deref())?;
            println!("wrote {}", dir.display());
        }
        Command::InspectGraph { run_dir, epoch, representation, norm, json, export } => {
            let summary =
                commands::inspect_graph(&run_dir, epoch, representation, norm, export.as_deref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.to_text());
            }
        }
        Command::InitRun { arch, input, classes, seed, run_id, out } => {
            let shape = commands::parse_input_shape(&input)?;
            commands::init_run(arch.into(), shape, classes, seed, &run_id, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
