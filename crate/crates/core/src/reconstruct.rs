//! Full-BRDF recovery from sparse measurements.
//!
//! Measurements at the support rows are centred by the dictionary mean,
//! fitted with ridge regression against the leading atoms of the row-sliced
//! dictionary, and synthesised back as `D s + mean`.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::PcaDictionary;
use crate::error::{Error, Result};
use crate::frost::SupportSet;
use crate::merl::{BrdfTensor, ValidityMap};
use crate::transform::{unmap_to_tensor, MappedBrdf, ReferenceBrdf};

pub const DEFAULT_ETA: f64 = 40.0;

/// Mapped-domain samples of one material at a support.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    /// Per channel, values in support order.
    pub values: [Vec<f64>; 3],
    pub support: Vec<usize>,
    pub material: String,
    pub provenance: String,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Per channel, length k (zero beyond the atoms used in the fit).
    pub coefficients: [DVector<f64>; 3],
    pub mapped: MappedBrdf,
    pub linear: BrdfTensor,
    /// Per channel `||b_lambda - D_rows s||_2`.
    pub ridge_residuals: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionOptions {
    pub eta: f64,
    /// Atoms used in the ridge fit; `None` means one per sample, capped at k.
    /// Fewer atoms than samples is supported; more is rejected.
    pub atoms: Option<usize>,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            atoms: None,
        }
    }
}

pub fn measure(
    brdf: &MappedBrdf,
    support: &SupportSet,
    material: &str,
) -> Result<MeasurementVector> {
    if support.is_empty() {
        return Err(Error::Parameter(
            "cannot measure at an empty support".into(),
        ));
    }
    if let Some(&bad) = support.indices().iter().find(|&&i| i >= brdf.rows()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: brdf.rows(),
        });
    }
    let values = std::array::from_fn(|c| {
        let ch = brdf.channel(c);
        support.indices().iter().map(|&i| ch[i]).collect()
    });
    Ok(MeasurementVector {
        values,
        support: support.indices().to_vec(),
        material: material.to_owned(),
        provenance: brdf.provenance().to_owned(),
    })
}

/// Solves `(A^T A + eta I) s = A^T b` by Cholesky.
pub fn ridge_solve(rows: &DMatrix<f64>, b: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Parameter(format!("eta must be >= 0, got {eta}")));
    }
    if rows.nrows() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} measurements for {} dictionary rows",
            b.len(),
            rows.nrows()
        )));
    }
    let k = rows.ncols();
    let mut gram = rows.transpose() * rows;
    for i in 0..k {
        gram[(i, i)] += eta;
    }
    let rhs = rows.transpose() * b;
    let scale = gram.diagonal().max();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("ridge normal matrix is not positive definite".into()))?;
    if eta == 0.0 {
        let pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v * v));
        if !(pivot > f64::EPSILON * k as f64 * scale) {
            return Err(Error::Singular(
                "dictionary rows are rank deficient and eta = 0".into(),
            ));
        }
    }
    Ok(chol.solve(&rhs))
}

/// `b_hat = D s + mean` per channel, unmapped and scattered onto the grid.
pub fn synthesize(
    dict: &PcaDictionary,
    coefficients: [DVector<f64>; 3],
    reference: &ReferenceBrdf,
    map: &ValidityMap,
) -> Result<(MappedBrdf, BrdfTensor, [DVector<f64>; 3])> {
    let k = dict.k();
    let n = dict.n();
    if map.len() != n || reference.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "dictionary has {n} rows, mask {} and reference {}",
            map.len(),
            reference.len()
        )));
    }
    let mut padded: [DVector<f64>; 3] = std::array::from_fn(|_| DVector::zeros(k));
    for (c, s) in coefficients.iter().enumerate() {
        if s.len() > k {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for {k} atoms",
                s.len()
            )));
        }
        padded[c].rows_mut(0, s.len()).copy_from(s);
    }
    let mut values = Vec::with_capacity(3 * n);
    for s in &padded {
        let b = dict.atoms() * s + dict.mean();
        values.extend(b.iter().copied());
    }
    let mapped = MappedBrdf::new(values, reference.id())?;
    let linear = unmap_to_tensor(&mapped, reference, map)?;
    Ok((mapped, linear, padded))
}

/// Ridge fit per channel followed by synthesis.
pub fn reconstruct_full(
    samples: &MeasurementVector,
    dict: &PcaDictionary,
    reference: &ReferenceBrdf,
    map: &ValidityMap,
    opts: &ReconstructionOptions,
) -> Result<ReconstructionResult> {
    if samples.provenance != reference.id() {
        return Err(Error::ProvenanceMismatch {
            expected: reference.id().to_owned(),
            found: samples.provenance.clone(),
        });
    }
    if samples.is_empty() {
        return Err(Error::Parameter("no samples to reconstruct from".into()));
    }
    let m = samples.len();
    let atoms = match opts.atoms {
        None => m.min(dict.k()),
        Some(a) if a >= 1 && a <= m && a <= dict.k() => a,
        Some(a) => {
            return Err(Error::InvalidK {
                k: a,
                constraint: format!("1 <= atoms <= min(m = {m}, k = {})", dict.k()),
            })
        }
    };
    let op = crate::frost::build_subsampling_operator(
        &SupportSet::from_indices(samples.support.clone()),
        dict.n(),
    )?;
    let rows = op.apply_matrix(&dict.atoms().columns(0, atoms).into_owned())?;
    let mean_at: Vec<f64> = op.apply(dict.mean().as_slice())?;

    let mut coefficients: [DVector<f64>; 3] = std::array::from_fn(|_| DVector::zeros(0));
    let mut ridge_residuals = [0.0; 3];
    for c in 0..3 {
        if samples.values[c].len() != m {
            return Err(Error::ShapeMismatch(format!(
                "channel {c} has {} values for {m} samples",
                samples.values[c].len()
            )));
        }
        let b = DVector::from_iterator(
            m,
            samples.values[c].iter().zip(&mean_at).map(|(v, mu)| v - mu),
        );
        let s = ridge_solve(&rows, &b, opts.eta)?;
        ridge_residuals[c] = (&b - &rows * &s).norm();
        coefficients[c] = s;
    }
    let (mapped, linear, coefficients) = synthesize(dict, coefficients, reference, map)?;
    Ok(ReconstructionResult {
        coefficients,
        mapped,
        linear,
        ridge_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_ridge() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 1.0);
        let s = ridge_solve(&a, &b, 40.0).unwrap();
        assert_eq!(s[0], 1.0 / 41.0);
    }

    #[test]
    fn unregularised_square_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_column_slice(&[3.0, 5.0]);
        let s = ridge_solve(&a, &b, 0.0).unwrap();
        assert!((&a * &s - &b).amax() < 1e-12);
    }

    #[test]
    fn unregularised_rank_deficient_is_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(matches!(ridge_solve(&a, &b, 0.0), Err(Error::Singular(_))));
        assert!(ridge_solve(&a, &b, 1.0).is_ok());
    }

    #[test]
    fn negative_eta_rejected() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 1.0);
        assert!(ridge_solve(&a, &b, -1.0).is_err());
    }

    #[test]
    fn measure_picks_support_rows() {
        let m = MappedBrdf::new((0..12).map(|i| i as f64).collect(), "p").unwrap();
        let mv = measure(&m, &SupportSet::from_indices(vec![0, 1, 2]), "x").unwrap();
        assert_eq!(mv.values[0], vec![0.0, 1.0, 2.0]);
        assert_eq!(mv.values[2], vec![8.0, 9.0, 10.0]);
        assert!(measure(&m, &SupportSet::from_indices(vec![]), "x").is_err());
        assert!(matches!(
            measure(&m, &SupportSet::from_indices(vec![4]), "x"),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
