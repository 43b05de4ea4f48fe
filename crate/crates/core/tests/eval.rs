mod common;

use std::collections::BTreeSet;

use common::rng;
use frost_brdf::eval::{
    kfold_split, mse_mapped, random_supports, run_experiment, snr_db, ExperimentConfig, KPolicy,
    Method,
};
use frost_brdf::merl::{BrdfResolution, BrdfTensor};
use frost_brdf::synthetic::gen_corpus;
use frost_brdf::transform::MappedBrdf;
use rand::Rng;

/// Upper 1% point of chi-square with 4095 degrees of freedom.
const CHI2_99_DF4095: f64 = 4308.467865579965;

#[test]
fn random_supports_are_uniform() {
    let n = 4096;
    let draws = random_supports(11, n, 20, 2048).unwrap();
    let mut counts = vec![0u32; n];
    for s in &draws {
        let distinct: BTreeSet<_> = s.indices().iter().collect();
        assert_eq!(distinct.len(), 20);
        for &i in s.indices() {
            counts[i] += 1;
        }
    }
    let expected = (20 * 2048) as f64 / n as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < CHI2_99_DF4095, "{chi2}");
}

#[test]
fn random_supports_reproduce_per_seed() {
    assert_eq!(
        random_supports(3, 500, 7, 4).unwrap(),
        random_supports(3, 500, 7, 4).unwrap()
    );
    assert_ne!(
        random_supports(3, 500, 7, 4).unwrap(),
        random_supports(4, 500, 7, 4).unwrap()
    );
}

#[test]
fn folds_partition_the_corpus() {
    let ids: Vec<String> = (0..23).map(|i| format!("m{i}")).collect();
    let plan = kfold_split(&ids, 5, 9).unwrap();
    let mut seen = BTreeSet::new();
    for f in 0..5 {
        let test = plan.test(f);
        assert!((4..=5).contains(&test.len()));
        let train = plan.train(f);
        assert_eq!(train.len() + test.len(), 23);
        assert!(test.iter().all(|id| !train.contains(id)));
        seen.extend(test.iter().cloned());
    }
    assert_eq!(seen.len(), 23);
    assert_eq!(plan, kfold_split(&ids, 5, 9).unwrap());
}

fn naive_mse(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        total += (a[i] - b[i]).powi(2);
    }
    total / a.len() as f64
}

#[test]
fn mse_matches_naive_sum_and_is_symmetric() {
    let mut r = rng(50);
    for _ in 0..20 {
        let n = r.random_range(1..50);
        let a: Vec<f64> = (0..3 * n).map(|_| r.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..3 * n).map(|_| r.random_range(-3.0..3.0)).collect();
        let ma = MappedBrdf::new(a.clone(), "p").unwrap();
        let mb = MappedBrdf::new(b.clone(), "p").unwrap();
        let m = mse_mapped(&ma, &mb).unwrap();
        assert!((m.mse - naive_mse(&a, &b)).abs() <= 1e-12 * m.mse.max(1.0));
        assert_eq!(m.mse, mse_mapped(&mb, &ma).unwrap().mse);
        assert_eq!(m.inverse, 1.0 / m.mse);
        assert!(snr_db(&ma, &mb).unwrap().is_finite());
    }
    let a = MappedBrdf::new(vec![1.0; 6], "p").unwrap();
    assert_eq!(mse_mapped(&a, &a).unwrap().inverse, f64::INFINITY);
    let other = MappedBrdf::new(vec![1.0; 6], "q").unwrap();
    assert!(mse_mapped(&a, &other).is_err());
}

fn small_corpus() -> Vec<(String, BrdfTensor)> {
    gen_corpus(1, 15, &BrdfResolution::cube(8).unwrap())
        .unwrap()
        .into_iter()
        .map(|(s, t)| (s.id, t))
        .collect()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        m_values: vec![3, 6],
        folds: 3,
        seed: 4,
        random_draws: 4,
        ..Default::default()
    }
}

#[test]
fn report_covers_every_material_method_and_draw() {
    let corpus = small_corpus();
    let cfg = small_config();
    let report = run_experiment(&cfg, &corpus).unwrap();
    assert_eq!(report.folds.len(), 3 * 2);
    let frost = report
        .records
        .iter()
        .filter(|r| r.method == Method::Frost)
        .count();
    let random = report
        .records
        .iter()
        .filter(|r| r.method == Method::Random)
        .count();
    assert_eq!(frost, 15 * 2);
    assert_eq!(random, 15 * 2 * 4);
    for m in [3, 6] {
        let tested: BTreeSet<_> = report
            .records
            .iter()
            .filter(|r| r.m == m && r.method == Method::Frost)
            .map(|r| r.material.clone())
            .collect();
        assert_eq!(tested.len(), 15);
    }
    for f in &report.folds {
        assert_eq!(f.k, f.m);
        assert_eq!(f.support.len(), f.m);
        assert_eq!(f.train_materials + f.test_materials, 15);
        assert!(f.selection_seconds >= 0.0);
    }
    assert!(report
        .records
        .iter()
        .all(|r| r.error.is_none() && r.mse.is_finite()));
}

#[test]
fn experiment_is_reproducible() {
    let corpus = small_corpus();
    let cfg = small_config();
    let a = run_experiment(&cfg, &corpus).unwrap();
    let b = run_experiment(&cfg, &corpus).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.summary_table(), b.summary_table());
}

#[test]
fn fixed_k_residual_shrinks_with_m() {
    let corpus = small_corpus();
    let cfg = ExperimentConfig {
        m_values: (2..=8).collect(),
        k_policy: KPolicy::Fixed(8),
        random_draws: 1,
        ..small_config()
    };
    let report = run_experiment(&cfg, &corpus).unwrap();
    for fold in 0..3 {
        let r: Vec<f64> = report
            .folds
            .iter()
            .filter(|f| f.fold == fold)
            .map(|f| f.training_residual)
            .collect();
        assert_eq!(r.len(), 7);
        for w in r.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn measurement_noise_changes_errors() {
    let corpus = small_corpus();
    let clean = run_experiment(&small_config(), &corpus).unwrap();
    let noisy_cfg = ExperimentConfig {
        noise_sigma: 0.5,
        ..small_config()
    };
    let noisy = run_experiment(&noisy_cfg, &corpus).unwrap();
    assert_ne!(clean.records, noisy.records);
}

#[test]
fn report_files_written() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small_config(), &small_corpus()).unwrap();
    report.write(dir.path(), "abc").unwrap();
    for name in [
        "report.jsonl",
        "folds.jsonl",
        "summary.txt",
        "series.csv",
        "timings.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let text = std::fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1 + report.records.len());
    assert!(!text.contains("seconds"));
}
