mod common;

use common::{gaussian, rng};
use frost_brdf::dictionary::{assemble_training_matrix, train_pca, PcaDictionary};
use frost_brdf::eval::mse_mapped;
use frost_brdf::frost::{somp_select, SompOptions, StoppingRule, SupportSet};
use frost_brdf::merl::{corpus_mask, BrdfResolution, BrdfTensor, ValidityMap};
use frost_brdf::reconstruct::{measure, reconstruct_full, ridge_solve, ReconstructionOptions};
use frost_brdf::synthetic::gen_corpus;
use frost_brdf::transform::{
    compute_reference, log_relative_map, MappedBrdf, ReferenceBrdf, ReferenceStatistic,
    DEFAULT_EPSILON,
};
use frost_brdf::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Plain gradient descent on `||b - A s||^2 + eta ||s||^2`.
fn ridge_by_descent(a: &DMatrix<f64>, b: &DVector<f64>, eta: f64) -> DVector<f64> {
    let lipschitz = 2.0 * (a.norm_squared() + eta);
    let step = 1.0 / lipschitz;
    let mut s = DVector::zeros(a.ncols());
    for _ in 0..200_000 {
        let grad = (a.transpose() * (a * &s - b) + &s * eta) * 2.0;
        if grad.norm() < 1e-14 * lipschitz {
            break;
        }
        s -= grad * step;
    }
    s
}

#[test]
fn ridge_matches_descent_oracle() {
    let mut r = rng(40);
    for _ in 0..20 {
        let m = r.random_range(5..20);
        let k = r.random_range(1..=m);
        let a = gaussian(&mut r, m, k);
        let b = DVector::from_column_slice(gaussian(&mut r, m, 1).as_slice());
        let eta = r.random_range(0.1..50.0);
        let got = ridge_solve(&a, &b, eta).unwrap();
        let want = ridge_by_descent(&a, &b, eta);
        assert!((got - want).amax() < 1e-6);
    }
}

#[test]
fn ridge_gradient_vanishes() {
    let mut r = rng(41);
    let a = gaussian(&mut r, 12, 6);
    let b = DVector::from_column_slice(gaussian(&mut r, 12, 1).as_slice());
    let s = ridge_solve(&a, &b, 40.0).unwrap();
    let grad = (a.transpose() * (&a * &s - &b) + &s * 40.0) * 2.0;
    let scale = (a.transpose() * &b).norm() * 2.0;
    assert!(grad.norm() <= 1e-8 * scale);
}

#[test]
fn ridge_shrinks_with_eta() {
    let mut r = rng(42);
    let a = gaussian(&mut r, 10, 5);
    let b = DVector::from_column_slice(gaussian(&mut r, 10, 1).as_slice());
    let norms: Vec<f64> = [0.0, 0.5, 5.0, 40.0, 1e4]
        .iter()
        .map(|&eta| ridge_solve(&a, &b, eta).unwrap().norm())
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert!(norms[4] < 1e-2 * norms[0]);
}

#[test]
fn scalar_ridge_is_exact() {
    let a = DMatrix::from_element(1, 1, 1.0);
    let b = DVector::from_element(1, 1.0);
    assert_eq!(ridge_solve(&a, &b, 40.0).unwrap()[0], 1.0 / 41.0);
}

struct Fixture {
    dict: PcaDictionary,
    reference: ReferenceBrdf,
    map: ValidityMap,
    corpus: Vec<(String, BrdfTensor)>,
}

fn fixture(k: usize) -> Fixture {
    let res = BrdfResolution::cube(8).unwrap();
    let corpus: Vec<(String, BrdfTensor)> = gen_corpus(5, 20, &res)
        .unwrap()
        .into_iter()
        .map(|(s, t)| (s.id, t))
        .collect();
    let tensors: Vec<BrdfTensor> = corpus.iter().map(|(_, t)| t.clone()).collect();
    let map = corpus_mask(&tensors).unwrap();
    let reference =
        compute_reference(&tensors, &map, DEFAULT_EPSILON, ReferenceStatistic::Median).unwrap();
    let mapped: Vec<(String, MappedBrdf)> = corpus
        .iter()
        .map(|(id, t)| (id.clone(), log_relative_map(t, &reference, &map).unwrap()))
        .collect();
    let dict = train_pca(&assemble_training_matrix(&mapped, &map).unwrap(), k).unwrap();
    Fixture {
        dict,
        reference,
        map,
        corpus,
    }
}

fn in_span(f: &Fixture, seed: u64) -> MappedBrdf {
    let mut r = rng(seed);
    let mut values = Vec::new();
    for _ in 0..3 {
        let c = DVector::from_column_slice(gaussian(&mut r, f.dict.k(), 1).as_slice()) * 0.3;
        values.extend((f.dict.atoms() * c + f.dict.mean()).iter().copied());
    }
    MappedBrdf::new(values, f.reference.id()).unwrap()
}

fn frost_support(dict: &PcaDictionary, m: usize) -> SupportSet {
    somp_select(
        dict.inverse(),
        dict.coefficients(),
        StoppingRule::SampleBudget(m),
        &SompOptions::default(),
    )
    .unwrap()
}

#[test]
fn in_span_brdf_recovered_exactly() {
    let f = fixture(10);
    let support = frost_support(&f.dict, 10);
    let opts = ReconstructionOptions {
        eta: 0.0,
        atoms: None,
    };
    for seed in 0..5 {
        let truth = in_span(&f, 100 + seed);
        let samples = measure(&truth, &support, "span").unwrap();
        let out = reconstruct_full(&samples, &f.dict, &f.reference, &f.map, &opts).unwrap();
        let mse = mse_mapped(&truth, &out.mapped).unwrap().mse;
        assert!(mse <= 1e-8, "{mse}");
        assert!(out.ridge_residuals.iter().all(|&r| r < 1e-8));
    }
}

#[test]
fn channels_are_fitted_independently() {
    let f = fixture(8);
    let support = frost_support(&f.dict, 8);
    let truth = log_relative_map(&f.corpus[3].1, &f.reference, &f.map).unwrap();
    let mut samples = measure(&truth, &support, "x").unwrap();
    let opts = ReconstructionOptions::default();
    let before = reconstruct_full(&samples, &f.dict, &f.reference, &f.map, &opts).unwrap();
    for v in &mut samples.values[1] {
        *v += 5.0;
    }
    let after = reconstruct_full(&samples, &f.dict, &f.reference, &f.map, &opts).unwrap();
    assert_eq!(before.coefficients[0], after.coefficients[0]);
    assert_eq!(before.coefficients[2], after.coefficients[2]);
    assert_ne!(before.coefficients[1], after.coefficients[1]);
}

#[test]
fn foreign_measurements_rejected() {
    let f = fixture(5);
    let support = frost_support(&f.dict, 5);
    let truth = MappedBrdf::new(vec![0.0; 3 * f.dict.n()], "other").unwrap();
    let samples = measure(&truth, &support, "x").unwrap();
    assert!(matches!(
        reconstruct_full(&samples, &f.dict, &f.reference, &f.map, &Default::default()),
        Err(Error::ProvenanceMismatch { .. })
    ));
}

#[test]
fn unmapped_output_is_a_valid_tensor() {
    let f = fixture(6);
    let support = frost_support(&f.dict, 6);
    let truth = log_relative_map(&f.corpus[0].1, &f.reference, &f.map).unwrap();
    let samples = measure(&truth, &support, "x").unwrap();
    let out =
        reconstruct_full(&samples, &f.dict, &f.reference, &f.map, &Default::default()).unwrap();
    assert_eq!(out.linear.valid_count(), f.map.len());
    for &g in f.map.grid_indices() {
        for c in 0..3 {
            assert!(out.linear.linear(c, g) >= 0.0);
        }
    }
}
