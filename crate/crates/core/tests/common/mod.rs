#![allow(dead_code)]

use frost_brdf::merl::{BrdfResolution, ValidityMap};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Every cell of an `n x 1 x 1` grid.
pub fn full_map(n: usize) -> ValidityMap {
    let res = BrdfResolution::new(n, 1, 1).unwrap();
    ValidityMap::from_mask(res, &vec![true; n]).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
