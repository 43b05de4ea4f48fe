//! Log-relative mapping between linear reflectance and the fitting domain.
//!
//! `mapped = ln((rho + eps) / (rho_ref + eps))` per channel and valid row,
//! with `rho_ref` a per-row statistic of the training corpus.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::merl::{BrdfTensor, ValidityMap};

pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Lower bound applied to every reference value.
pub const REFERENCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceStatistic {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBrdf {
    values: Vec<f64>,
    epsilon: f64,
    id: String,
}

impl ReferenceBrdf {
    /// Values are floored at [`REFERENCE_FLOOR`].
    pub fn new(values: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Parameter(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("reference holds a non-finite value".into()));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v.max(REFERENCE_FLOOR)).collect();
        let mut h = Sha256::new();
        h.update(epsilon.to_le_bytes());
        for v in &values {
            h.update(v.to_le_bytes());
        }
        let id = hex::encode(&h.finalize()[..8]);
        Ok(Self {
            values,
            epsilon,
            id,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Content hash of values and epsilon.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Three channels over the valid rows of a mask, in the mapped domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedBrdf {
    values: Vec<f64>,
    rows: usize,
    provenance: String,
}

impl MappedBrdf {
    /// `values` is channel-major with `3 * rows` entries.
    pub fn new(values: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if !values.len().is_multiple_of(3) {
            return Err(Error::ShapeMismatch(format!(
                "{} mapped values is not a multiple of 3",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("mapped value is not finite".into()));
        }
        let rows = values.len() / 3;
        Ok(Self {
            values,
            rows,
            provenance: provenance.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.rows..(c + 1) * self.rows]
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn check_rows(brdf: &BrdfTensor, map: &ValidityMap) -> Result<()> {
    if brdf.resolution() != map.resolution() {
        return Err(Error::ShapeMismatch(format!(
            "tensor resolution {:?} differs from mask resolution {:?}",
            brdf.resolution(),
            map.resolution()
        )));
    }
    if let Some(&g) = map.grid_indices().iter().find(|&&g| !brdf.is_valid(g)) {
        return Err(Error::InconsistentMask(format!(
            "cell {g} is in the mask but invalid in the tensor"
        )));
    }
    Ok(())
}

/// Per-row statistic over every training BRDF and channel.
pub fn compute_reference(
    training: &[BrdfTensor],
    map: &ValidityMap,
    epsilon: f64,
    statistic: ReferenceStatistic,
) -> Result<ReferenceBrdf> {
    if training.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if map.is_empty() {
        return Err(Error::EmptyMask);
    }
    for b in training {
        check_rows(b, map)?;
    }
    let mut scratch = Vec::with_capacity(3 * training.len());
    let values = map
        .grid_indices()
        .iter()
        .map(|&g| {
            scratch.clear();
            for b in training {
                scratch.extend((0..3).map(|c| b.linear(c, g)));
            }
            match statistic {
                ReferenceStatistic::Median => median(&mut scratch),
                ReferenceStatistic::Mean => scratch.iter().sum::<f64>() / scratch.len() as f64,
            }
        })
        .collect();
    ReferenceBrdf::new(values, epsilon)
}

/// Maps linear reflectance at the rows of `map` into the log-relative domain.
pub fn log_relative_map(
    brdf: &BrdfTensor,
    reference: &ReferenceBrdf,
    map: &ValidityMap,
) -> Result<MappedBrdf> {
    if map.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} rows, reference has {}",
            map.len(),
            reference.len()
        )));
    }
    check_rows(brdf, map)?;
    let eps = reference.epsilon;
    let mut values = Vec::with_capacity(3 * map.len());
    for c in 0..3 {
        values.extend(
            map.grid_indices()
                .iter()
                .zip(&reference.values)
                .map(|(&g, &r)| map_value(brdf.linear(c, g), r, eps)),
        );
    }
    MappedBrdf::new(values, reference.id.clone())
}

#[inline]
pub fn map_value(rho: f64, rho_ref: f64, eps: f64) -> f64 {
    ((rho + eps) / (rho_ref + eps)).ln()
}

#[inline]
pub fn unmap_value(mapped: f64, rho_ref: f64, eps: f64) -> f64 {
    (mapped.exp() * (rho_ref + eps) - eps).max(0.0)
}

/// Inverse mapping; returns linear reflectance, channel-major over dense rows.
pub fn log_relative_unmap(mapped: &MappedBrdf, reference: &ReferenceBrdf) -> Result<Vec<f64>> {
    if mapped.provenance != reference.id {
        return Err(Error::ProvenanceMismatch {
            expected: reference.id.clone(),
            found: mapped.provenance.clone(),
        });
    }
    if mapped.rows != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "mapped has {} rows, reference has {}",
            mapped.rows,
            reference.len()
        )));
    }
    let eps = reference.epsilon;
    Ok(mapped
        .values
        .iter()
        .enumerate()
        .map(|(i, &m)| unmap_value(m, reference.values[i % mapped.rows], eps))
        .collect())
}

/// Unmaps and scatters onto the full grid; cells outside `map` become invalid.
pub fn unmap_to_tensor(
    mapped: &MappedBrdf,
    reference: &ReferenceBrdf,
    map: &ValidityMap,
) -> Result<BrdfTensor> {
    let dense = log_relative_unmap(mapped, reference)?;
    let res = map.resolution();
    let cells = res.cells();
    let mut linear = vec![0.0; 3 * cells];
    for c in 0..3 {
        for (row, &g) in map.grid_indices().iter().enumerate() {
            linear[c * cells + g] = dense[c * mapped.rows + row];
        }
    }
    BrdfTensor::from_linear(res, &linear, &map.to_mask())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merl::BrdfResolution;
    use proptest::prelude::*;

    fn constant(res: BrdfResolution, v: f64) -> BrdfTensor {
        let n = res.cells();
        BrdfTensor::from_linear(res, &vec![v; 3 * n], &vec![true; n]).unwrap()
    }

    fn one_row(rgb: [f64; 3]) -> BrdfTensor {
        BrdfTensor::from_linear(BrdfResolution::new(1, 1, 1).unwrap(), &rgb, &[true]).unwrap()
    }

    #[test]
    fn constant_corpus_reference() {
        let res = BrdfResolution::cube(4).unwrap();
        let b = constant(res, 0.5);
        let map = crate::merl::validity_mask(&b).unwrap();
        let r = compute_reference(&[b], &map, DEFAULT_EPSILON, ReferenceStatistic::Median).unwrap();
        assert!(r.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn median_of_three() {
        // Each BRDF is grey so the 9 samples are {0.1 x3, 0.2 x3, 0.9 x3}.
        let bs: Vec<_> = [0.1, 0.2, 0.9]
            .iter()
            .map(|&v| one_row([v, v, v]))
            .collect();
        let map = crate::merl::validity_mask(&bs[0]).unwrap();
        let r = compute_reference(&bs, &map, DEFAULT_EPSILON, ReferenceStatistic::Median).unwrap();
        assert!((r.values()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_reference_is_floored() {
        let bs = vec![one_row([0.0; 3]), one_row([0.0; 3])];
        let map = crate::merl::validity_mask(&bs[0]).unwrap();
        let r = compute_reference(&bs, &map, DEFAULT_EPSILON, ReferenceStatistic::Median).unwrap();
        assert_eq!(r.values()[0], REFERENCE_FLOOR);
    }

    #[test]
    fn empty_corpus_errors() {
        let b = one_row([0.1; 3]);
        let map = crate::merl::validity_mask(&b).unwrap();
        assert!(matches!(
            compute_reference(&[], &map, DEFAULT_EPSILON, ReferenceStatistic::Median),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn map_of_reference_is_zero() {
        let b = one_row([0.3, 0.3, 0.3]);
        let map = crate::merl::validity_mask(&b).unwrap();
        let r = ReferenceBrdf::new(vec![0.3], DEFAULT_EPSILON).unwrap();
        let m = log_relative_map(&b, &r, &map).unwrap();
        assert!(m.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_reflectance_against_floor() {
        let v = map_value(0.0, 1e-6, 1e-3);
        let expected = (1e-3f64 / (1e-3 + 1e-6)).ln();
        assert_eq!(v, expected);
        assert!((v - (-9.995e-4)).abs() < 1e-7);
    }

    #[test]
    fn unmap_zero_gives_reference_and_clamps() {
        let r = ReferenceBrdf::new(vec![0.4], DEFAULT_EPSILON).unwrap();
        let m = MappedBrdf::new(vec![0.0, 0.0, -50.0], r.id()).unwrap();
        let lin = log_relative_unmap(&m, &r).unwrap();
        assert!((lin[0] - 0.4).abs() < 1e-15);
        assert_eq!(lin[2], 0.0);
    }

    #[test]
    fn unmap_checks_provenance() {
        let r = ReferenceBrdf::new(vec![0.4], DEFAULT_EPSILON).unwrap();
        let m = MappedBrdf::new(vec![0.0; 3], "someone-else").unwrap();
        assert!(matches!(
            log_relative_unmap(&m, &r),
            Err(Error::ProvenanceMismatch { .. })
        ));
    }

    #[test]
    fn map_shape_mismatch() {
        let b = one_row([0.3; 3]);
        let map = crate::merl::validity_mask(&b).unwrap();
        let r = ReferenceBrdf::new(vec![0.3, 0.3], DEFAULT_EPSILON).unwrap();
        assert!(matches!(
            log_relative_map(&b, &r, &map),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn unmap_to_tensor_restores_grid() {
        let res = BrdfResolution::new(1, 1, 3).unwrap();
        let b = BrdfTensor::from_linear(
            res,
            &[0.1, 0.2, 0.0, 0.3, 0.4, 0.0, 0.5, 0.6, 0.0],
            &[true, true, false],
        )
        .unwrap();
        let map = crate::merl::validity_mask(&b).unwrap();
        let r = compute_reference(
            std::slice::from_ref(&b),
            &map,
            DEFAULT_EPSILON,
            ReferenceStatistic::Mean,
        )
        .unwrap();
        let m = log_relative_map(&b, &r, &map).unwrap();
        let back = unmap_to_tensor(&m, &r, &map).unwrap();
        assert_eq!(back.mask(), b.mask());
        for c in 0..3 {
            for g in 0..2 {
                let (x, y) = (back.linear(c, g), b.linear(c, g));
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{x} vs {y}");
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(rho in 0.0f64..1e3, rho_ref in 1e-6f64..1e3, eps in 1e-6f64..1.0) {
            let back = unmap_value(map_value(rho, rho_ref, eps), rho_ref, eps);
            // Relative to rho + eps: near rho = 0 the subtraction of eps
            // dominates the achievable precision.
            prop_assert!((back - rho).abs() <= 1e-12 * (rho + eps));
        }

        #[test]
        fn map_is_strictly_increasing(a in 0.0f64..100.0, d in 1e-6f64..100.0, rho_ref in 1e-6f64..10.0) {
            prop_assert!(map_value(a + d, rho_ref, DEFAULT_EPSILON) > map_value(a, rho_ref, DEFAULT_EPSILON));
        }
    }
}
