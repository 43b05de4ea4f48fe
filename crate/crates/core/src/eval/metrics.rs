use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::MappedBrdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mse {
    pub mse: f64,
    /// `1 / mse`, `+inf` when the inputs are identical.
    pub inverse: f64,
}

impl Mse {
    pub fn new(mse: f64) -> Self {
        let inverse = if mse > 0.0 { 1.0 / mse } else { f64::INFINITY };
        Self { mse, inverse }
    }
}

fn check_pair(a: &MappedBrdf, b: &MappedBrdf) -> Result<()> {
    if a.provenance() != b.provenance() {
        return Err(Error::ProvenanceMismatch {
            expected: a.provenance().to_owned(),
            found: b.provenance().to_owned(),
        });
    }
    if a.rows() != b.rows() {
        return Err(Error::InconsistentMask(format!(
            "{} rows against {}",
            a.rows(),
            b.rows()
        )));
    }
    Ok(())
}

/// Mean squared difference over every valid row and channel.
pub fn mse_mapped(a: &MappedBrdf, b: &MappedBrdf) -> Result<Mse> {
    check_pair(a, b)?;
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(Mse::new(sum / a.values().len() as f64))
}

/// `10 log10(||reference||^2 / ||reference - estimate||^2)` in decibels.
pub fn snr_db(reference: &MappedBrdf, estimate: &MappedBrdf) -> Result<f64> {
    check_pair(reference, estimate)?;
    let (signal, noise) = reference
        .values()
        .iter()
        .zip(estimate.values())
        .fold((0.0, 0.0), |(s, n), (r, e)| {
            (s + r * r, n + (r - e) * (r - e))
        });
    Ok(10.0 * (signal / noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapped(v: Vec<f64>) -> MappedBrdf {
        MappedBrdf::new(v, "p").unwrap()
    }

    #[test]
    fn identical_inputs() {
        let a = mapped(vec![0.1, 0.2, 0.3]);
        let m = mse_mapped(&a, &a).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.inverse, f64::INFINITY);
    }

    #[test]
    fn constant_offset() {
        let a = mapped(vec![0.0; 6]);
        let b = mapped(vec![0.1; 6]);
        let m = mse_mapped(&a, &b).unwrap();
        assert!((m.mse - 0.01).abs() < 1e-15);
        assert!((m.inverse - 100.0).abs() < 1e-10);
        assert_eq!(mse_mapped(&b, &a).unwrap().mse, m.mse);
    }

    #[test]
    fn provenance_checked() {
        let a = mapped(vec![0.0; 3]);
        let b = MappedBrdf::new(vec![0.0; 3], "q").unwrap();
        assert!(matches!(
            mse_mapped(&a, &b),
            Err(Error::ProvenanceMismatch { .. })
        ));
    }

    #[test]
    fn snr_of_ten_percent_error() {
        let a = mapped(vec![1.0; 3]);
        let b = mapped(vec![0.9; 3]);
        assert!((snr_db(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }
}
