//! Acceptance criteria, one pass/fail line each. Runs the shipped desk config
//! end to end against a freshly generated corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;

use epochgraph::centrality::{eigenvector_centrality, weighted_degree, EigenOptions};
use epochgraph::corpus::Network;
use epochgraph::graphgen::{split_signed, Edge, LayeredGraph, Representation};
use epochgraph::signature::{compose_blocks, SignatureMode};
use epochgraph::tensorstore::{ArchitectureSpec, InputShape};
use epochgraph_cli::pipeline::{PipelineReport, REPORT_FILE};

const BIN: &str = env!("CARGO_BIN_EXE_epochgraph");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn epochgraph(args: &[&str]) -> anyhow::Result<(String, Duration)> {
    let start = Instant::now();
    let out = Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .context("spawning epochgraph")?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        bail!("epochgraph {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    Ok((String::from_utf8(out.stdout)?, elapsed))
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

struct Workspace {
    root: PathBuf,
    corpus: PathBuf,
    generate_time: Duration,
}

impl Workspace {
    fn pipeline(&self, config: &str, out: &str, extra: &[&str]) -> anyhow::Result<(PipelineReport, Duration)> {
        let out = self.root.join(out);
        let cfg = configs().join(config);
        let mut args = vec!["pipeline", "--config", p(&cfg), "--corpus", p(&self.corpus), "--out", p(&out)];
        args.extend_from_slice(extra);
        let (_, elapsed) = epochgraph(&args)?;
        let report = serde_json::from_str(&std::fs::read_to_string(out.join(REPORT_FILE))?)?;
        Ok((report, elapsed))
    }
}

type Check = anyhow::Result<String>;

fn lenet_checkpoint(ws: &Workspace) -> anyhow::Result<PathBuf> {
    let dir = ws.root.join("lenet_init");
    if !dir.join("manifest.json").exists() {
        epochgraph(&["init-run", "--arch", "lenet5", "--input", "3x32x32", "--classes", "10", "--out", p(&dir)])?;
    }
    Ok(dir)
}

fn inspect(dir: &Path, representation: &str) -> anyhow::Result<(serde_json::Value, Duration)> {
    let (stdout, elapsed) = epochgraph(&["inspect-graph", p(dir), "--epoch", "1", "--representation", representation, "--json"])?;
    Ok((serde_json::from_str(&stdout)?, elapsed))
}

fn criterion_1(ws: &Workspace) -> Check {
    let (g, elapsed) = inspect(&lenet_checkpoint(ws)?, "rolled")?;
    let (nodes, edges) = (g["nodes"].as_u64(), g["edges"].as_u64());
    ensure!(nodes == Some(239) && edges == Some(12_954), "got {nodes:?} nodes, {edges:?} edges");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("239 nodes, 12954 edges in {elapsed:.2?}"))
}

fn criterion_2(ws: &Workspace) -> Check {
    let (g, elapsed) = inspect(&lenet_checkpoint(ws)?, "unrolled")?;
    let (nodes, edges) = (g["nodes"].as_u64(), g["edges"].as_u64());
    ensure!(nodes == Some(11_166) && edges == Some(658_024), "got {nodes:?} nodes, {edges:?} edges");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("11166 nodes, 658024 edges in {elapsed:.2?}"))
}

fn random_kpartite<R: Rng>(r: &mut R, max_nodes: usize) -> (LayeredGraph, DMatrix<f64>) {
    loop {
        let k = r.gen_range(2..=5);
        let mut parts: Vec<usize> = (0..k).map(|_| r.gen_range(1..=7)).collect();
        while parts.iter().sum::<usize>() > max_nodes {
            let i = parts.iter().position(|&p| p > 1).unwrap();
            parts[i] -= 1;
        }
        let n: usize = parts.iter().sum();
        let mut edges = Vec::new();
        let mut offset = 0;
        for pair in parts.windows(2) {
            for i in 0..pair[0] {
                for j in 0..pair[1] {
                    if r.gen_bool(0.6) {
                        edges.push(Edge {
                            u: (offset + i) as u32,
                            v: (offset + pair[0] + j) as u32,
                            weight: r.gen_range(0.01..2.0),
                        });
                    }
                }
            }
            offset += pair[0];
        }
        let mut a = DMatrix::zeros(n, n);
        for e in &edges {
            a[(e.u as usize, e.v as usize)] = e.weight;
            a[(e.v as usize, e.u as usize)] = e.weight;
        }
        // keep connected graphs only
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if a[(i, j)] != 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if n >= 2 && seen.iter().all(|&s| s) {
            let g = LayeredGraph {
                partitions: parts,
                edges,
                representation: Representation::Fc,
            };
            return (g, a);
        }
    }
}

fn criterion_3() -> Check {
    let mut r = epochgraph::rng(3);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let (g, a) = random_kpartite(&mut r, 30);
        let eig = SymmetricEigen::new(a.clone());
        let v = eig.eigenvectors.column(eig.eigenvalues.imax());
        let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
        let got = eigenvector_centrality(&g, EigenOptions::default())?.values;
        let dist = got.iter().zip(v.iter()).map(|(x, y)| (x - sign * y).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(dist);
        ensure!(dist <= 1e-6, "case {case}: eigenvector distance {dist:e}");
        let degree = weighted_degree(&g).values;
        for (i, d) in degree.iter().enumerate() {
            let row: f64 = a.row(i).iter().sum();
            ensure!(d.to_bits() == row.to_bits(), "case {case} node {i}: degree {d} vs row sum {row}");
        }
    }
    Ok(format!("50 graphs, worst eigenvector distance {worst:.1e}, degrees exact"))
}

fn criterion_4() -> Check {
    let mut r = epochgraph::rng(4);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let archs = [
        ArchitectureSpec::toy(InputShape::new(1, 8, 8), 4),
        ArchitectureSpec::lenet5(InputShape::new(3, 32, 32), 10),
    ];
    for trial in 0..20 {
        let mut arch = archs[trial % 2].clone();
        let hidden_fc = arch.layers.len() - 2;
        arch.layers[hidden_fc].dropout = 0.3;
        let mut net = Network::init(&arch, &mut r)?;
        // nonzero biases keep the probe off relu kinks
        for p in net.params.iter_mut().flatten() {
            p.bias.iter_mut().for_each(|b| *b = r.gen_range(-0.1..0.1));
        }
        let x: Vec<f64> = (0..net.input_len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let class = r.gen_range(0..net.classes());
        let mask_seed: u64 = r.gen();
        let loss = |net: &Network| Network::loss(&net.forward(&x, Some(&mut epochgraph::rng(mask_seed))), class);

        let mut grads = net.zero_grads();
        let trace = net.forward(&x, Some(&mut epochgraph::rng(mask_seed)));
        net.backward(&trace, class, &mut grads);
        let analytic: Vec<f64> = grads.iter().flatten().flat_map(|g| g.weights.iter().chain(&g.bias).copied()).collect();
        let sizes: Vec<usize> = net.params.iter().flatten().map(|p| p.weights.len() + p.bias.len()).collect();
        let mut offset = 0;
        for size in sizes {
            for local in sample(&mut r, size, size.min(3)) {
                let k = offset + local;
                let h = 1e-6;
                let original = *net.parameters().nth(k).unwrap();
                *net.parameters_mut().nth(k).unwrap() = original + h;
                let up = loss(&net);
                *net.parameters_mut().nth(k).unwrap() = original - h;
                let down = loss(&net);
                *net.parameters_mut().nth(k).unwrap() = original;
                let numeric = (up - down) / (2.0 * h);
                let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-4);
                worst = worst.max(rel);
                ensure!(rel <= 1e-4, "trial {trial} param {k}: analytic {} numeric {numeric}", analytic[k]);
                checked += 1;
            }
            offset += size;
        }
    }
    Ok(format!("{checked} conv/fc parameters, worst relative error {worst:.1e}"))
}

fn criterion_5(ws: &Workspace) -> Check {
    let (report, elapsed) = ws.pipeline("desk.toml", "desk", &["--no-cache"])?;
    let acc = report.eval.mean_accuracy.context("no accuracy")?;
    let shuffled = report.shuffled_label_accuracy.context("no shuffled baseline")?;
    let balance = report.eval.balance.context("no class balance")?;
    let total = ws.generate_time + elapsed;
    ensure!(report.runs >= 120, "only {} runs", report.runs);
    ensure!(balance.low.abs_diff(balance.high) <= 2, "labels unbalanced: {balance:?}");
    ensure!(acc >= 0.75, "accuracy {acc:.4}");
    ensure!((0.4..=0.6).contains(&shuffled), "shuffled-label accuracy {shuffled:.4}");
    ensure!(acc > shuffled, "accuracy {acc:.4} does not beat shuffled {shuffled:.4}");
    ensure!(total <= Duration::from_secs(15 * 60), "generate + pipeline took {total:?}");
    Ok(format!(
        "{} runs ({} low / {} high), accuracy {acc:.4}, shuffled {shuffled:.4}, generate+pipeline {total:.1?}",
        report.runs, balance.low, balance.high
    ))
}

fn criterion_6(ws: &Workspace) -> Check {
    let (report, _) = ws.pipeline("regression.toml", "regression", &[])?;
    let r2 = report.eval.mean_r2.context("no r2")?;
    let mae = report.eval.mean_mae.context("no mae")?;
    let base = report.eval.mean_baseline_mae.context("no baseline")?;
    ensure!(r2 >= 0.4, "r2 {r2:.4}");
    ensure!(mae < base, "mae {mae:.4} not below baseline {base:.4}");
    Ok(format!("R2 {r2:.4}, MAE {mae:.4} vs constant-mean {base:.4}"))
}

fn criterion_7(ws: &Workspace) -> Check {
    let (report, _) = ws.pipeline("budget_curve.toml", "budget_curve", &[])?;
    let curve = &report.eval.curve;
    ensure!(curve.len() == 20, "curve has {} rows", curve.len());
    ensure!(curve.iter().enumerate().all(|(i, c)| c.t == i + 1 && c.feature_len == 5 * (i + 1)));
    let at = |t: usize| curve[t - 1].metric;
    let gap = (at(5) - at(20)).abs();
    ensure!(gap <= 0.05, "curve(5) {:.4} vs curve(20) {:.4}", at(5), at(20));
    Ok(format!("curve(5) {:.4}, curve(20) {:.4}, gap {gap:.4}", at(5), at(20)))
}

fn criterion_8() -> Check {
    let mut r = epochgraph::rng(8);
    for case in 0..1000 {
        let t = r.gen_range(1..=12);
        let blocks: Vec<Vec<f64>> = (0..t).map(|_| (0..5).map(|_| r.gen_range(-1e3..1e3)).collect()).collect();
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        let concat = bits(compose_blocks(&blocks, SignatureMode::Concat)?);
        ensure!(bits(compose_blocks(&blocks, SignatureMode::Exponential { alpha: 1.0 })?) == concat, "case {case}: alpha 1 differs from concat");
        let one = &blocks[..1];
        let single = bits(compose_blocks(one, SignatureMode::Concat)?);
        for mode in [SignatureMode::LinearWeighted, SignatureMode::Exponential { alpha: r.gen_range(0.01..1.0) }] {
            ensure!(bits(compose_blocks(one, mode)?) == single, "case {case}: single epoch differs under {mode:?}");
        }

        let parts: Vec<usize> = (0..r.gen_range(2..=4)).map(|_| r.gen_range(1..=6)).collect();
        let mut edges = Vec::new();
        let mut offset = 0;
        for pair in parts.windows(2) {
            for i in 0..pair[0] {
                for j in 0..pair[1] {
                    let weight = if r.gen_bool(0.1) { 0.0 } else { r.gen_range(-1.0..1.0) };
                    edges.push(Edge { u: (offset + i) as u32, v: (offset + pair[0] + j) as u32, weight });
                }
            }
            offset += pair[0];
        }
        let g = LayeredGraph { partitions: parts, edges, representation: Representation::Fc };
        let key = |e: &Edge| (e.u, e.v, e.weight.to_bits());
        let mut merged: Vec<_> = split_signed(&g).merge().iter().map(key).collect();
        let mut original: Vec<_> = g.edges.iter().filter(|e| e.weight != 0.0).map(key).collect();
        merged.sort_unstable();
        original.sort_unstable();
        ensure!(merged == original, "case {case}: split does not reconstruct");
    }
    Ok("1000 cases: alpha 1 == concat, single-epoch invariance, split reconstruction".into())
}

fn criterion_9(ws: &Workspace) -> Check {
    ws.pipeline("desk.toml", "det_a", &["--no-cache"])?;
    ws.pipeline("desk.toml", "det_b", &["--no-cache"])?;
    let (a, b) = (ws.root.join("det_a"), ws.root.join("det_b"));
    let mut names: Vec<String> = std::fs::read_dir(&a)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    ensure!(names.len() >= 6, "only {names:?}");
    for name in &names {
        ensure!(std::fs::read(a.join(name))? == std::fs::read(b.join(name))?, "{name} differs");
    }
    Ok(format!("{} report files byte-identical", names.len()))
}

fn main() -> ExitCode {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("acceptance workspace");
    let corpus = root.join("corpus");
    let desk = configs().join("desk.toml");
    println!("generating the desk corpus (this trains every grid cell)...");
    let generate_time = match epochgraph(&["generate", "--config", p(&desk), "--corpus", p(&corpus)]) {
        Ok((stdout, elapsed)) => {
            print!("{stdout}");
            elapsed
        }
        Err(e) => {
            println!("corpus generation failed: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let ws = Workspace { root, corpus, generate_time };

    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("rolled LeNet graph size", Box::new(|| criterion_1(&ws))),
        ("unrolled LeNet graph size", Box::new(|| criterion_2(&ws))),
        ("centrality oracle", Box::new(criterion_3)),
        ("gradient correctness", Box::new(criterion_4)),
        ("early-epoch classification", Box::new(|| criterion_5(&ws))),
        ("windowed regression", Box::new(|| criterion_6(&ws))),
        ("early-budget dominance", Box::new(|| criterion_7(&ws))),
        ("signature algebra", Box::new(criterion_8)),
        ("determinism", Box::new(|| criterion_9(&ws))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: pass ({detail})", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({e:#})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
