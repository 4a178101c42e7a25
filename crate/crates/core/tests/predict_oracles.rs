mod common;

use epochgraph::centrality::FeatureKind;
use epochgraph::graphgen::{build_rolled_graph, Norm, Representation};
use epochgraph::pipeline::{series_blocks, SnapshotSpec};
use epochgraph::predict::{
    build_dataset, constant_mean_mae, cross_validate, feature_layout, feature_report, train_linear_svm, train_ols,
    Label, LabeledDataset, ModelConfig, OlsConfig, RunSnapshots, SvmConfig, Threshold,
};
use epochgraph::predict::FeatureSpec;
use epochgraph::signature::SignatureMode;
use epochgraph::tensorstore::{ArchitectureSpec, InputShape};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::{random_series, rng};

fn rows_from(x: &[Vec<f64>], y: &[f64]) -> Vec<(String, Vec<f64>, f64)> {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (f, &a))| (format!("r{i}"), f.clone(), a))
        .collect()
}

#[test]
fn ols_matches_pseudo_inverse() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let (n, p) = (20, 4);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let data = LabeledDataset::from_rows(rows_from(&x, &y), Threshold::Median).unwrap();
        let model = train_ols(&data, &OlsConfig::default()).unwrap();
        assert!(!model.metadata.ridge_applied);
        let (coef, intercept) = model.raw_coefficients().unwrap();

        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
        let beta = design.pseudo_inverse(1e-12).unwrap() * DVector::from_vec(y.clone());
        assert!((intercept - beta[0]).abs() < 1e-8, "intercept {intercept} vs {}", beta[0]);
        for j in 0..p {
            assert!((coef[j] - beta[j + 1]).abs() < 1e-8, "coef {j}: {} vs {}", coef[j], beta[j + 1]);
        }
    }
}

#[test]
fn constant_mean_mae_is_mean_absolute_deviation() {
    let y = [0.1, 0.4, 0.4, 0.9];
    // mean 0.45; deviations .35 .05 .05 .45
    assert!((constant_mean_mae(&y) - 0.225).abs() < 1e-15);
}

#[test]
fn constant_predictor_r2_is_not_positive() {
    let mut r = rng(3);
    let x: Vec<Vec<f64>> = (0..50).map(|_| vec![1.0, 2.0]).collect();
    let y: Vec<f64> = (0..50).map(|_| r.gen_range(0.0..1.0)).collect();
    let data = LabeledDataset::from_rows(rows_from(&x, &y), Threshold::Median).unwrap();
    let report = cross_validate(&data, &ModelConfig::Ols(OlsConfig::default()), 5, 9).unwrap();
    for fold in &report.folds {
        let r2 = fold.r2.unwrap();
        assert!(r2 <= 0.0, "fold {} r2 {r2}", fold.fold);
        assert!((fold.mae.unwrap() - fold.baseline_mae.unwrap()).abs() < 1e-12);
    }
}

/// 250 rows, 125 per class, with a feature that carries the label.
fn informative(seed: u64) -> LabeledDataset {
    let mut r = rng(seed);
    let rows = (0..250)
        .map(|i| {
            let acc = if i % 2 == 0 { 0.2 } else { 0.8 };
            let features = (0..5).map(|_| r.gen_range(-1.0..1.0) + 2.0 * acc).collect();
            (format!("r{i}"), features, acc)
        })
        .collect();
    LabeledDataset::from_rows(rows, Threshold::Fixed(0.5)).unwrap()
}

#[test]
fn shuffled_labels_fall_to_chance() {
    let config = ModelConfig::LinearSvm(SvmConfig::default());
    let mut total = 0.0;
    let seeds = 0..8u64;
    for seed in seeds.clone() {
        let data = informative(seed);
        let real = cross_validate(&data, &config, 5, seed).unwrap().mean_accuracy.unwrap();
        assert!(real > 0.9, "seed {seed}: informative accuracy {real}");
        let null = cross_validate(&data.with_shuffled_labels(seed + 100), &config, 5, seed)
            .unwrap()
            .mean_accuracy
            .unwrap();
        assert!((0.4..=0.6).contains(&null), "seed {seed}: shuffled accuracy {null}");
        total += null;
    }
    let mean = total / seeds.count() as f64;
    assert!((mean - 0.5).abs() < 0.05, "battery mean {mean}");
}

#[test]
fn reported_weights_rank_the_full_data_model() {
    let data = informative(1);
    let svm = SvmConfig::default();
    let report = cross_validate(&data, &ModelConfig::LinearSvm(svm), 5, 1).unwrap();
    let direct = train_linear_svm(&data, &svm).unwrap();
    let w = direct.linear_weights().unwrap();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().partial_cmp(&w[a].abs()).unwrap().then(a.cmp(&b)));
    assert_eq!(report.feature_weights.len(), w.len());
    for (rank, fw) in report.feature_weights.iter().enumerate() {
        assert_eq!(fw.index, order[rank]);
        assert_eq!(fw.weight.to_bits(), w[fw.index].to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svm_predictions_ignore_column_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let data = informative(seed);
        let scaled_rows = data
            .rows
            .iter()
            .map(|s| (s.run_id.clone(), s.features.iter().map(|v| v * scale).collect(), s.accuracy))
            .collect();
        let scaled = LabeledDataset::from_rows(scaled_rows, Threshold::Fixed(0.5)).unwrap();
        let a = train_linear_svm(&data, &SvmConfig::default()).unwrap();
        let b = train_linear_svm(&scaled, &SvmConfig::default()).unwrap();
        for (s, t) in data.rows.iter().zip(&scaled.rows) {
            prop_assert_eq!(a.predict_label(&s.features), b.predict_label(&t.features));
        }
    }
}

#[test]
fn mean_degree_trajectories_match_recomputation() {
    let mut r = rng(11);
    let arch = ArchitectureSpec::toy(InputShape::new(1, 8, 8), 4);
    let spec = SnapshotSpec::new(Representation::Rolled, FeatureKind::Degree);
    let mut runs = Vec::new();
    let mut series_list = Vec::new();
    for i in 0..8 {
        let mut s = random_series(arch.clone(), 4, &mut r);
        s.final_accuracy = 0.1 * (i + 1) as f64;
        runs.push(RunSnapshots {
            run_id: s.run_id.clone(),
            final_accuracy: s.final_accuracy,
            blocks: series_blocks(&s, &spec, None).unwrap(),
        });
        series_list.push(s);
    }
    let fspec = FeatureSpec::Prefix { t: 3, mode: SignatureMode::Concat };
    let data = build_dataset(&runs, &fspec, Threshold::Median).unwrap();
    let model = train_linear_svm(&data, &SvmConfig::default()).unwrap();
    let names = spec.block_names();
    let report = feature_report(&model, &feature_layout(&fspec, &names), &runs, &names, data.threshold).unwrap();

    assert_eq!(report.trajectories.len(), 8 * 4);
    for row in &report.trajectories {
        let s = series_list.iter().find(|s| s.run_id == row.run_id).unwrap();
        let g = build_rolled_graph(&s.epochs[row.epoch - 1], &arch, Norm::L2).unwrap();
        let total: f64 = g.edges.iter().map(|e| e.weight).sum();
        let mean_degree = 2.0 * total / g.node_count() as f64;
        assert!((row.values[1] - mean_degree).abs() < 1e-12 * mean_degree, "{} vs {mean_degree}", row.values[1]);
        let expected = if row.final_accuracy > data.threshold { Label::High } else { Label::Low };
        assert_eq!(row.label, expected);
    }

    for gm in &report.group_means {
        let members: Vec<_> = report
            .trajectories
            .iter()
            .filter(|t| t.label == gm.label && t.epoch == gm.epoch)
            .collect();
        assert_eq!(gm.runs, members.len());
        for (k, m) in gm.means.iter().enumerate() {
            let direct = members.iter().map(|t| t.values[k]).sum::<f64>() / members.len() as f64;
            assert!((m - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }
}
