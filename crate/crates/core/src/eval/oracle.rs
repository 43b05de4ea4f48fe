use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::frost::SupportSet;
use crate::rng::{stream_rng, Stream};

/// Largest number of subsets [`brute_force_support`] will enumerate.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

fn binomial(n: usize, m: usize) -> u64 {
    let m = m.min(n - m);
    (0..m).fold(1u64, |acc, i| {
        acc.saturating_mul((n - i) as u64) / (i as u64 + 1)
    })
}

/// `||S - A A^+ S||_F` for the columns `A` of `dinv` at `subset`, using an
/// SVD-based pseudo-inverse.
pub fn projection_residual(dinv: &DMatrix<f64>, s: &DMatrix<f64>, subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return s.norm();
    }
    let a = dinv.select_columns(subset);
    let svd = a.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12;
    let pinv = svd.pseudo_inverse(tol).expect("tolerance is non-negative");
    (s - &a * (pinv * s)).norm()
}

/// Exhaustive search for the `m`-column support of `dinv` that best explains
/// `S`. Ties keep the lexicographically smallest subset.
pub fn brute_force_support(
    dinv: &DMatrix<f64>,
    s: &DMatrix<f64>,
    m: usize,
) -> Result<(Vec<usize>, f64)> {
    let n = dinv.ncols();
    if m == 0 || m > n {
        return Err(Error::Parameter(format!(
            "support size {m} outside [1, {n}]"
        )));
    }
    if binomial(n, m) > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            n,
            m,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in (0..n).combinations(m) {
        let r = projection_residual(dinv, s, &subset);
        if best.as_ref().is_none_or(|(_, b)| r < *b) {
            best = Some((subset, r));
        }
    }
    Ok(best.expect("at least one subset"))
}

/// `m` distinct rows drawn uniformly from `0..n`.
pub fn random_support<R: Rng>(rng: &mut R, n: usize, m: usize) -> Result<SupportSet> {
    if m == 0 || m > n {
        return Err(Error::Parameter(format!(
            "random support of {m} rows from {n}"
        )));
    }
    Ok(SupportSet::from_indices(
        rand::seq::index::sample(rng, n, m).into_vec(),
    ))
}

pub fn random_baseline(n: usize, m: usize, seed: u64) -> Result<SupportSet> {
    random_support(&mut stream_rng(seed, Stream::Baseline, 0), n, m)
}

/// A multiple-measurement instance whose coefficients are explained exactly
/// by a known set of columns.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    /// `k x n`, standard normal entries.
    pub dinv: DMatrix<f64>,
    /// `k x t`, equal to `dinv[:, support] X` for a standard normal `X`.
    pub s: DMatrix<f64>,
    /// Planted columns, ascending.
    pub support: Vec<usize>,
}

pub fn planted_instance<R: Rng>(
    rng: &mut R,
    k: usize,
    n: usize,
    t: usize,
    sparsity: usize,
) -> Result<PlantedInstance> {
    if k == 0 || t == 0 || sparsity == 0 || sparsity > n.min(k) {
        return Err(Error::Parameter(format!(
            "planted instance k={k} n={n} t={t} sparsity={sparsity}"
        )));
    }
    let dinv = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut support = rand::seq::index::sample(rng, n, sparsity).into_vec();
    support.sort_unstable();
    let x = DMatrix::from_fn(sparsity, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = dinv.select_columns(&support) * x;
    Ok(PlantedInstance { dinv, s, support })
}
