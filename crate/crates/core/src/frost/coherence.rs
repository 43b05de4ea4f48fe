use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Cumulative coherence `mu_1(m)`: the largest total absolute correlation
/// between one unit-normalised column and `m` other columns.
pub fn cumulative_coherence(dinv: &DMatrix<f64>, m: usize) -> Result<f64> {
    let n = dinv.ncols();
    if m >= n {
        return Err(Error::Parameter(format!(
            "coherence order m={m} must be below the column count {n}"
        )));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let mut unit = dinv.clone();
    for (j, mut col) in unit.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::ZeroColumn(j));
        }
        col /= norm;
    }
    let unit = &unit;
    let mu = (0..n)
        .into_par_iter()
        .map(|i| {
            let anchor = unit.column(i);
            let mut corr: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| anchor.dot(&unit.column(j)).abs())
                .collect();
            corr.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
            corr[..m].iter().sum::<f64>()
        })
        .reduce(|| 0.0, f64::max);
    Ok(mu)
}

/// Upper bound on the greedy residual relative to the optimal `m`-support
/// residual. Requires `mu1 < 1/2`.
pub fn greedy_error_bound(mu1: f64, m: usize, t: usize, optimal_err: f64) -> Result<f64> {
    if !(mu1 < 0.5) {
        return Err(Error::AssumptionViolated(mu1));
    }
    let denom = (1.0 - 2.0 * mu1).powi(2);
    let factor = (1.0 + (m * t) as f64 * (1.0 - mu1) / denom).sqrt();
    Ok(factor * optimal_err)
}
