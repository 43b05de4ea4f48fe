//! Optimal sample placement: greedy row-support recovery over the
//! dictionary inverse and the coefficient matrix.
//!
//! Given `D^+` (k x n) and `S` (k x t), SOMP repeatedly picks the column `j`
//! of `D^+` whose correlation with the current residual has the largest
//! l1 norm, then projects `S` onto the orthogonal complement of the selected
//! columns. The selected column indices are dense BRDF rows, i.e. the
//! measurement directions.

mod coherence;
mod somp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merl::{index_to_direction, HalfAngleDirection, ValidityMap};

pub use coherence::{cumulative_coherence, greedy_error_bound};
pub use somp::{atom_select, residual_update, somp_select};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRule {
    /// Select exactly `m` rows.
    SampleBudget(usize),
    /// Stop once the squared Frobenius residual is at most `epsilon`.
    /// `max_iters` defaults to `min(k, n)`.
    ErrorThreshold {
        epsilon: f64,
        max_iters: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// Grow an orthonormal basis of the selected columns one column at a time.
    #[default]
    Incremental,
    /// Re-factor the whole selection every iteration.
    Recompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SompOptions {
    /// Divide correlations by the column norm of `D^+`.
    pub normalize_columns: bool,
    pub residual_mode: ResidualMode,
}

/// Selected dense rows in selection order, with the Frobenius residual
/// after each selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    indices: Vec<usize>,
    residual_history: Vec<f64>,
}

impl SupportSet {
    pub fn new(indices: Vec<usize>, residual_history: Vec<f64>) -> Self {
        Self {
            indices,
            residual_history,
        }
    }

    /// A support without a residual trace (e.g. a random baseline).
    pub fn from_indices(indices: Vec<usize>) -> Self {
        Self::new(indices, Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Row selection of the n x n identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsamplingOperator {
    rows: Vec<usize>,
    n: usize,
}

impl SubsamplingOperator {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} for operator on {}",
                v.len(),
                self.n
            )));
        }
        Ok(self.rows.iter().map(|&r| v[r]).collect())
    }

    /// Applies the operator to every column of `m`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "matrix with {} rows for operator on {}",
                m.nrows(),
                self.n
            )));
        }
        Ok(m.select_rows(&self.rows))
    }

    /// Explicit m x n matrix form.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(self.rows.len(), self.n);
        for (i, &r) in self.rows.iter().enumerate() {
            phi[(i, r)] = 1.0;
        }
        phi
    }
}

pub fn build_subsampling_operator(support: &SupportSet, n: usize) -> Result<SubsamplingOperator> {
    if let Some(&bad) = support.indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    Ok(SubsamplingOperator {
        rows: support.indices.clone(),
        n,
    })
}

/// Bin-center directions of the selected dense rows.
pub fn support_to_directions(
    support: &SupportSet,
    row_map: &ValidityMap,
) -> Result<Vec<HalfAngleDirection>> {
    let res = row_map.resolution();
    support
        .indices
        .iter()
        .map(|&row| {
            let grid = row_map.dense_to_grid(row).ok_or(Error::UnmappedRow(row))?;
            index_to_direction(grid, &res)
        })
        .collect()
}
