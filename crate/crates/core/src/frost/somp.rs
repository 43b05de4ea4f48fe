use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{ResidualMode, SompOptions, StoppingRule, SupportSet};

/// Columns per parallel work item in the correlation scan.
const SCAN_CHUNK: usize = 2048;

/// Relative size of an orthogonal component below which a new column is
/// treated as dependent on the current selection (condition estimate 1e12).
const COLLAPSE_RATIO: f64 = 1e-12;

/// Residuals below this fraction of `||S||_F` count as fully explained.
const CONVERGED_RATIO: f64 = 1e-12;

fn column_norms(dinv: &DMatrix<f64>) -> Vec<f64> {
    dinv.column_iter().map(|c| c.norm()).collect()
}

/// Picks the column maximising `score(i)` among unselected columns,
/// smallest index on ties. Scores are computed per column so the result does
/// not depend on how the scan is split across threads.
fn argmax_unselected<F>(n: usize, selected: &[bool], score: F) -> Option<(usize, f64)>
where
    F: Fn(std::ops::Range<usize>) -> Vec<f64> + Sync,
{
    let starts: Vec<usize> = (0..n).step_by(SCAN_CHUNK).collect();
    starts
        .into_par_iter()
        .filter_map(|start| {
            let end = (start + SCAN_CHUNK).min(n);
            let scores = score(start..end);
            let mut best: Option<(usize, f64)> = None;
            for (off, s) in scores.into_iter().enumerate() {
                let i = start + off;
                if selected[i] {
                    continue;
                }
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            best
        })
        .reduce_with(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
}

fn l1_correlations(
    dinv: &DMatrix<f64>,
    residual: &DMatrix<f64>,
    norms: Option<&[f64]>,
    range: std::ops::Range<usize>,
) -> Vec<f64> {
    let block = dinv.columns(range.start, range.len());
    let corr = residual.transpose() * block;
    corr.column_iter()
        .enumerate()
        .map(|(off, c)| {
            let l1 = c.lp_norm(1);
            match norms {
                Some(n) if n[range.start + off] > 0.0 => l1 / n[range.start + off],
                Some(_) => 0.0,
                None => l1,
            }
        })
        .collect()
}

/// Column `j` of `dinv` maximising `||dinv_j^T R||_1`, skipping columns
/// flagged in `selected`; ties go to the smallest index.
pub fn atom_select(
    dinv: &DMatrix<f64>,
    residual: &DMatrix<f64>,
    selected: &[bool],
) -> Option<usize> {
    argmax_unselected(dinv.ncols(), selected, |r| {
        l1_correlations(dinv, residual, None, r)
    })
    .map(|(j, _)| j)
}

/// `R = S - A A^+ S` with `A` the columns of `dinv` at `support`, computed
/// from scratch through a Householder QR of `A`.
pub fn residual_update(
    dinv: &DMatrix<f64>,
    support: &[usize],
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if dinv.nrows() != s.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "dictionary inverse has {} rows, coefficients {}",
            dinv.nrows(),
            s.nrows()
        )));
    }
    if support.is_empty() {
        return Ok(s.clone());
    }
    let k = dinv.nrows();
    if support.len() > k {
        return Err(Error::RankCollapse {
            selected: support.len(),
        });
    }
    for &j in support {
        if j >= dinv.ncols() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: dinv.ncols(),
            });
        }
    }
    let a = dinv.select_columns(support);
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let qr = a.qr();
    let r = qr.r();
    let diag_min = r
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(scale > 0.0) || diag_min <= COLLAPSE_RATIO * scale {
        return Err(Error::RankCollapse {
            selected: support.len(),
        });
    }
    let q = qr.q();
    let proj = &q * (q.transpose() * s);
    Ok(s - proj)
}

/// Orthonormal basis of the selected columns, grown one column at a time.
struct IncrementalBasis {
    q: Vec<DVector<f64>>,
}

impl IncrementalBasis {
    fn new() -> Self {
        Self { q: Vec::new() }
    }

    fn orthogonal_part(&self, a: &DVector<f64>) -> DVector<f64> {
        let mut v = a.clone();
        // Two passes of classical Gram-Schmidt.
        for _ in 0..2 {
            for q in &self.q {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        v
    }

    /// Appends `a` and deflates `residual`; `None` when `a` is dependent.
    fn push(&mut self, a: &DVector<f64>, residual: &mut DMatrix<f64>) -> Option<()> {
        let norm_a = a.norm();
        let mut v = self.orthogonal_part(a);
        let norm_v = v.norm();
        if !(norm_a > 0.0) || norm_v <= COLLAPSE_RATIO * norm_a {
            return None;
        }
        v /= norm_v;
        let coeffs = v.transpose() * &*residual;
        residual.ger(-1.0, &v, &coeffs.transpose(), 1.0);
        self.q.push(v);
        Some(())
    }
}

/// Simultaneous orthogonal matching pursuit over the columns of `dinv`.
pub fn somp_select(
    dinv: &DMatrix<f64>,
    s: &DMatrix<f64>,
    stop: StoppingRule,
    opts: &SompOptions,
) -> Result<SupportSet> {
    let (k, n) = dinv.shape();
    if s.nrows() != k {
        return Err(Error::ShapeMismatch(format!(
            "dictionary inverse is {k}x{n}, coefficients have {} rows",
            s.nrows()
        )));
    }
    let s_norm = s.norm();
    if !(s_norm > 0.0) {
        return Err(Error::Parameter("coefficient matrix is zero".into()));
    }
    let limit = k.min(n);
    let (max_iters, threshold) = match stop {
        StoppingRule::SampleBudget(m) => {
            if m == 0 {
                return Err(Error::Parameter("sample budget must be >= 1".into()));
            }
            if m > limit {
                return Err(Error::BudgetTooLarge { m, limit });
            }
            (m, None)
        }
        StoppingRule::ErrorThreshold { epsilon, max_iters } => {
            if !(epsilon >= 0.0) {
                return Err(Error::Parameter(format!("error threshold {epsilon} < 0")));
            }
            let cap = max_iters.unwrap_or(limit).min(limit);
            (cap, Some(epsilon))
        }
    };

    let norms = column_norms(dinv);
    let norms_ref = opts.normalize_columns.then_some(norms.as_slice());
    let mut selected = vec![false; n];
    let mut indices = Vec::with_capacity(max_iters);
    let mut history = Vec::with_capacity(max_iters);
    let mut residual = s.clone();
    let mut basis = IncrementalBasis::new();
    let mut res_norm = s_norm;

    while indices.len() < max_iters {
        if let Some(eps) = threshold {
            if res_norm * res_norm <= eps || res_norm <= CONVERGED_RATIO * s_norm {
                break;
            }
        }
        let explained = res_norm <= CONVERGED_RATIO * s_norm;
        let pick = if explained {
            // Nothing left to correlate with: extend the span as much as possible.
            argmax_unselected(n, &selected, |r| {
                r.map(|i| basis.orthogonal_part(&dinv.column(i).into_owned()).norm())
                    .collect()
            })
        } else {
            argmax_unselected(n, &selected, |r| {
                l1_correlations(dinv, &residual, norms_ref, r)
            })
        };
        let (j, _) = pick.ok_or(Error::BudgetTooLarge {
            m: indices.len() + 1,
            limit,
        })?;
        selected[j] = true;
        indices.push(j);
        basis
            .push(&dinv.column(j).into_owned(), &mut residual)
            .ok_or(Error::RankCollapse {
                selected: indices.len(),
            })?;
        if opts.residual_mode == ResidualMode::Recompute {
            residual = residual_update(dinv, &indices, s)?;
        }
        res_norm = residual.norm();
        history.push(res_norm);
    }
    Ok(SupportSet::new(indices, history))
}
