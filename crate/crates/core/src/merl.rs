//! MERL isotropic BRDF files and the Rusinkiewicz half-angle grid.
//!
//! A file is a 12-byte header of three little-endian `i32` dimensions
//! (`n_theta_h`, `n_theta_d`, `n_phi_d`) followed by `3 * n` little-endian
//! `f64` values, channel-major (all red, then green, then blue). Cell
//! `(i_th, i_td, i_pd)` lives at `i_pd + n_phi_d * (i_td + n_theta_d * i_th)`.
//! Stored values are linear reflectance divided by a per-channel scale and a
//! negative stored value marks an unmeasured direction.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multipliers from stored value to linear reflectance, per channel (R, G, B).
pub const CHANNEL_SCALE: [f64; 3] = [1.0 / 1500.0, 1.15 / 1500.0, 1.66 / 1500.0];

/// Sentinel written into cells that carry no measurement.
pub const INVALID_SENTINEL: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BrdfResolution {
    pub n_theta_h: usize,
    pub n_theta_d: usize,
    pub n_phi_d: usize,
}

impl Default for BrdfResolution {
    fn default() -> Self {
        Self::MERL
    }
}

impl BrdfResolution {
    pub const MERL: BrdfResolution = BrdfResolution {
        n_theta_h: 90,
        n_theta_d: 90,
        n_phi_d: 180,
    };

    pub fn new(n_theta_h: usize, n_theta_d: usize, n_phi_d: usize) -> Result<Self> {
        if n_theta_h == 0 || n_theta_d == 0 || n_phi_d == 0 {
            return Err(Error::Domain(format!(
                "resolution ({n_theta_h}, {n_theta_d}, {n_phi_d}) has a zero dimension"
            )));
        }
        Ok(Self {
            n_theta_h,
            n_theta_d,
            n_phi_d,
        })
    }

    /// Same count along every axis.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    /// Number of grid cells (per channel).
    pub fn cells(&self) -> usize {
        self.n_theta_h * self.n_theta_d * self.n_phi_d
    }

    pub fn linear_index(&self, i_theta_h: usize, i_theta_d: usize, i_phi_d: usize) -> usize {
        i_phi_d + self.n_phi_d * (i_theta_d + self.n_theta_d * i_theta_h)
    }

    pub fn split_index(&self, idx: usize) -> (usize, usize, usize) {
        let i_phi_d = idx % self.n_phi_d;
        let rest = idx / self.n_phi_d;
        (rest / self.n_theta_d, rest % self.n_theta_d, i_phi_d)
    }
}

/// Rusinkiewicz half/difference angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfAngleDirection {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d: f64,
}

impl HalfAngleDirection {
    pub fn new(theta_h: f64, theta_d: f64, phi_d: f64) -> Result<Self> {
        let d = Self {
            theta_h,
            theta_d,
            phi_d,
        };
        d.check()?;
        Ok(d)
    }

    fn check(&self) -> Result<()> {
        let ok = |v: f64, hi: f64| v.is_finite() && (0.0..hi).contains(&v);
        if !ok(self.theta_h, FRAC_PI_2) || !ok(self.theta_d, FRAC_PI_2) || !ok(self.phi_d, PI) {
            return Err(Error::Domain(format!(
                "direction ({}, {}, {}) outside [0, pi/2) x [0, pi/2) x [0, pi)",
                self.theta_h, self.theta_d, self.phi_d
            )));
        }
        Ok(())
    }

    /// Angles in whole degrees, rounded half-to-even.
    pub fn to_degrees(&self) -> DirectionDegrees {
        let deg = |r: f64| r.to_degrees().round_ties_even() as i32;
        DirectionDegrees {
            theta_h: deg(self.theta_h),
            theta_d: deg(self.theta_d),
            phi_d: deg(self.phi_d),
        }
    }
}

/// Integer-degree direction used in sample tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionDegrees {
    pub theta_h: i32,
    pub theta_d: i32,
    pub phi_d: i32,
}

fn bin(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Grid cell containing `d`. The `theta_h` axis uses the square-root warp.
pub fn direction_to_index(d: &HalfAngleDirection, res: &BrdfResolution) -> Result<usize> {
    d.check()?;
    let i_theta_h = bin((d.theta_h / FRAC_PI_2).sqrt(), res.n_theta_h);
    let i_theta_d = bin(d.theta_d / FRAC_PI_2, res.n_theta_d);
    let i_phi_d = bin(d.phi_d / PI, res.n_phi_d);
    Ok(res.linear_index(i_theta_h, i_theta_d, i_phi_d))
}

/// Bin-center direction of grid cell `idx`.
pub fn index_to_direction(idx: usize, res: &BrdfResolution) -> Result<HalfAngleDirection> {
    if idx >= res.cells() {
        return Err(Error::Domain(format!(
            "grid index {idx} outside [0, {})",
            res.cells()
        )));
    }
    let (i_th, i_td, i_pd) = res.split_index(idx);
    let warped = (i_th as f64 + 0.5) / res.n_theta_h as f64;
    Ok(HalfAngleDirection {
        theta_h: warped * warped * FRAC_PI_2,
        theta_d: (i_td as f64 + 0.5) / res.n_theta_d as f64 * FRAC_PI_2,
        phi_d: (i_pd as f64 + 0.5) / res.n_phi_d as f64 * PI,
    })
}

/// One isotropic BRDF on the half-angle grid.
///
/// Values are kept exactly as stored on disk; [`BrdfTensor::linear`] applies
/// the channel scale. This keeps file round trips bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct BrdfTensor {
    resolution: BrdfResolution,
    stored: Vec<f64>,
    mask: Vec<bool>,
}

impl BrdfTensor {
    /// Builds a tensor from raw stored values (channel-major, `3 * cells`).
    pub fn from_stored(resolution: BrdfResolution, stored: Vec<f64>) -> Result<Self> {
        let n = resolution.cells();
        if stored.len() != 3 * n {
            return Err(Error::Format(format!(
                "payload holds {} values, expected 3 * {n}",
                stored.len()
            )));
        }
        if let Some(bad) = stored.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite stored value {bad}")));
        }
        let mask = (0..n)
            .map(|i| (0..3).all(|c| stored[c * n + i] >= 0.0))
            .collect();
        Ok(Self {
            resolution,
            stored,
            mask,
        })
    }

    /// Builds a tensor from linear reflectance. Cells with `mask == false`
    /// are overwritten with the sentinel.
    pub fn from_linear(resolution: BrdfResolution, linear: &[f64], mask: &[bool]) -> Result<Self> {
        let n = resolution.cells();
        if linear.len() != 3 * n || mask.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values and {n} mask cells, got {} and {}",
                3 * n,
                linear.len(),
                mask.len()
            )));
        }
        let mut stored = vec![0.0; 3 * n];
        for c in 0..3 {
            for i in 0..n {
                let v = linear[c * n + i];
                stored[c * n + i] = if mask[i] {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::Domain(format!(
                            "valid cell {i} channel {c} has reflectance {v}"
                        )));
                    }
                    v / CHANNEL_SCALE[c]
                } else {
                    INVALID_SENTINEL
                };
            }
        }
        Ok(Self {
            resolution,
            stored,
            mask: mask.to_vec(),
        })
    }

    pub fn resolution(&self) -> BrdfResolution {
        self.resolution
    }

    pub fn stored(&self) -> &[f64] {
        &self.stored
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_valid(&self, cell: usize) -> bool {
        self.mask[cell]
    }

    /// Linear reflectance (sr^-1) of `channel` at grid `cell`.
    pub fn linear(&self, channel: usize, cell: usize) -> f64 {
        self.stored[channel * self.resolution.cells() + cell] * CHANNEL_SCALE[channel]
    }

    /// All linear values, channel-major. Invalid cells hold negative values.
    pub fn linear_values(&self) -> Vec<f64> {
        let n = self.resolution.cells();
        self.stored
            .iter()
            .enumerate()
            .map(|(i, v)| v * CHANNEL_SCALE[i / n])
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn read_merl(path: impl AsRef<Path>) -> Result<BrdfTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    parse_merl(&bytes)
}

/// Decodes an in-memory MERL file.
pub fn parse_merl(bytes: &[u8]) -> Result<BrdfTensor> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the 12-byte header",
            bytes.len()
        )));
    }
    let mut dims = [0usize; 3];
    for (k, chunk) in bytes[..12].chunks_exact(4).enumerate() {
        let v = i32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if v <= 0 {
            return Err(Error::Format(format!("header dimension {k} is {v}")));
        }
        dims[k] = v as usize;
    }
    let res = BrdfResolution::new(dims[0], dims[1], dims[2])?;
    let payload = &bytes[12..];
    let expected = 3 * res.cells() * 8;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let stored = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    BrdfTensor::from_stored(res, stored)
}

/// Encodes a tensor in MERL layout.
pub fn encode_merl(brdf: &BrdfTensor) -> Vec<u8> {
    let res = brdf.resolution;
    let mut out = Vec::with_capacity(12 + brdf.stored.len() * 8);
    for d in [res.n_theta_h, res.n_theta_d, res.n_phi_d] {
        out.extend_from_slice(&(d as i32).to_le_bytes());
    }
    for v in &brdf.stored {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes `brdf`, creating missing parent directories.
pub fn write_merl(brdf: &BrdfTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_merl(brdf))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Bijection between dense rows (valid cells, ascending) and grid indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMap {
    resolution: BrdfResolution,
    grid_indices: Vec<usize>,
    dense_of_grid: Vec<u32>,
}

const UNMAPPED: u32 = u32::MAX;

impl ValidityMap {
    pub fn from_mask(resolution: BrdfResolution, mask: &[bool]) -> Result<Self> {
        if mask.len() != resolution.cells() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} cells, resolution has {}",
                mask.len(),
                resolution.cells()
            )));
        }
        let grid_indices: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        Self::from_grid_indices(resolution, grid_indices)
    }

    /// `grid_indices` must be strictly increasing and inside the grid.
    pub fn from_grid_indices(resolution: BrdfResolution, grid_indices: Vec<usize>) -> Result<Self> {
        if grid_indices.is_empty() {
            return Err(Error::EmptyMask);
        }
        let cells = resolution.cells();
        let mut dense_of_grid = vec![UNMAPPED; cells];
        let mut prev = None;
        for (row, &g) in grid_indices.iter().enumerate() {
            if g >= cells {
                return Err(Error::IndexOutOfRange {
                    index: g,
                    len: cells,
                });
            }
            if prev.is_some_and(|p| p >= g) {
                return Err(Error::InconsistentMask(
                    "grid indices must be strictly increasing".into(),
                ));
            }
            prev = Some(g);
            dense_of_grid[g] = row as u32;
        }
        Ok(Self {
            resolution,
            grid_indices,
            dense_of_grid,
        })
    }

    pub fn resolution(&self) -> BrdfResolution {
        self.resolution
    }

    /// Valid grid indices in ascending order; position is the dense row.
    pub fn grid_indices(&self) -> &[usize] {
        &self.grid_indices
    }

    pub fn len(&self) -> usize {
        self.grid_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_indices.is_empty()
    }

    pub fn dense_to_grid(&self, row: usize) -> Option<usize> {
        self.grid_indices.get(row).copied()
    }

    pub fn grid_to_dense(&self, grid: usize) -> Option<usize> {
        match self.dense_of_grid.get(grid) {
            Some(&r) if r != UNMAPPED => Some(r as usize),
            _ => None,
        }
    }

    pub fn to_mask(&self) -> Vec<bool> {
        self.dense_of_grid.iter().map(|&r| r != UNMAPPED).collect()
    }
}

/// Valid cells of one tensor.
pub fn validity_mask(brdf: &BrdfTensor) -> Result<ValidityMap> {
    ValidityMap::from_mask(brdf.resolution, &brdf.mask)
}

/// Cells valid in every tensor of the corpus.
pub fn corpus_mask(brdfs: &[BrdfTensor]) -> Result<ValidityMap> {
    let first = brdfs.first().ok_or(Error::EmptyCorpus)?;
    let res = first.resolution;
    let mut mask = first.mask.clone();
    for b in &brdfs[1..] {
        if b.resolution != res {
            return Err(Error::InconsistentMask(format!(
                "resolution {:?} differs from {:?}",
                b.resolution, res
            )));
        }
        mask.iter_mut().zip(&b.mask).for_each(|(m, &o)| *m &= o);
    }
    ValidityMap::from_mask(res, &mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merl_res() -> BrdfResolution {
        BrdfResolution::MERL
    }

    #[test]
    fn origin_maps_to_zero() {
        let d = HalfAngleDirection::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(direction_to_index(&d, &merl_res()).unwrap(), 0);
    }

    #[test]
    fn theta_h_warp_second_bin() {
        // sqrt(th / (pi/2)) * 90 = 1 exactly when th = (pi/2) / 90^2.
        let th = FRAC_PI_2 * (1.0 / 90.0) * (1.0 / 90.0);
        let d = HalfAngleDirection::new(th, 0.0, 0.0).unwrap();
        assert_eq!(direction_to_index(&d, &merl_res()).unwrap(), 16200);
    }

    #[test]
    fn phi_d_last_bin() {
        let d = HalfAngleDirection::new(0.0, 0.0, PI * (179.5 / 180.0)).unwrap();
        assert_eq!(direction_to_index(&d, &merl_res()).unwrap(), 179);
    }

    #[test]
    fn out_of_range_angles_rejected() {
        assert!(HalfAngleDirection::new(FRAC_PI_2, 0.0, 0.0).is_err());
        assert!(HalfAngleDirection::new(0.0, -0.1, 0.0).is_err());
        assert!(HalfAngleDirection::new(0.0, 0.0, PI).is_err());
        let raw = HalfAngleDirection {
            theta_h: 0.0,
            theta_d: 0.0,
            phi_d: 4.0,
        };
        assert!(matches!(
            direction_to_index(&raw, &merl_res()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn index_zero_is_first_bin_center() {
        let d = index_to_direction(0, &merl_res()).unwrap();
        assert!((d.theta_h - FRAC_PI_2 * (0.5f64 / 90.0).powi(2)).abs() < 1e-15);
        assert!((d.theta_d - 0.5 / 90.0 * FRAC_PI_2).abs() < 1e-15);
        assert!((d.phi_d - 0.5 / 180.0 * PI).abs() < 1e-15);
        let deg = d.to_degrees();
        assert_eq!((deg.theta_h, deg.theta_d, deg.phi_d), (0, 0, 0));
        assert!(index_to_direction(merl_res().cells(), &merl_res()).is_err());
    }

    #[test]
    fn index_round_trip_exhaustive_8() {
        let res = BrdfResolution::cube(8).unwrap();
        for idx in 0..res.cells() {
            let d = index_to_direction(idx, &res).unwrap();
            assert_eq!(direction_to_index(&d, &res).unwrap(), idx);
        }
    }

    #[test]
    fn zero_resolution_rejected() {
        assert!(BrdfResolution::new(0, 1, 1).is_err());
    }

    #[test]
    fn negative_stored_value_is_invalid_and_preserved() {
        let res = BrdfResolution::new(1, 1, 2).unwrap();
        let stored = vec![-1.0, 3.0, 1.0, 1.0, 1.0, 1.0];
        let t = BrdfTensor::from_stored(res, stored).unwrap();
        assert_eq!(t.mask(), &[false, true]);
        assert_eq!(t.stored()[0], -1.0);
    }

    #[test]
    fn stored_1500_red_is_unit_reflectance() {
        let res = BrdfResolution::new(1, 1, 1).unwrap();
        let t = BrdfTensor::from_stored(res, vec![1500.0, 1500.0, 1500.0]).unwrap();
        assert_eq!(t.linear(0, 0), 1.0);
        assert!((t.linear(1, 0) - 1.15).abs() < 1e-15);
        assert!((t.linear(2, 0) - 1.66).abs() < 1e-15);
    }

    #[test]
    fn encoded_size_follows_resolution() {
        let res = BrdfResolution::cube(16).unwrap();
        let n = res.cells();
        let t = BrdfTensor::from_linear(res, &vec![0.25; 3 * n], &vec![true; n]).unwrap();
        let bytes = encode_merl(&t);
        assert_eq!(n, 4096);
        assert_eq!(bytes.len(), 12 + 3 * 4096 * 8);
        assert_eq!(&bytes[..4], &16i32.to_le_bytes());
        assert!(t.stored().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn header_errors() {
        let mut bytes = Vec::new();
        for d in [2i32, 0, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        assert!(matches!(parse_merl(&bytes), Err(Error::Format(_))));
        let mut bytes = Vec::new();
        for d in [1i32, 1, 1] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(parse_merl(&bytes), Err(Error::Format(_))));
        assert!(matches!(parse_merl(&[0u8; 5]), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_merl("/nonexistent/definitely/missing.binary"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn validity_map_two_cells() {
        let res = BrdfResolution::new(1, 1, 8).unwrap();
        let mut mask = vec![false; 8];
        mask[3] = true;
        mask[7] = true;
        let t = BrdfTensor::from_linear(res, &[0.1; 24], &mask).unwrap();
        let vm = validity_mask(&t).unwrap();
        assert_eq!(vm.grid_indices(), &[3, 7]);
        assert_eq!(vm.dense_to_grid(1), Some(7));
        assert_eq!(vm.grid_to_dense(7), Some(1));
        assert_eq!(vm.grid_to_dense(4), None);
    }

    #[test]
    fn all_valid_map_is_identity() {
        let res = BrdfResolution::cube(16).unwrap();
        let n = res.cells();
        let t = BrdfTensor::from_linear(res, &vec![0.3; 3 * n], &vec![true; n]).unwrap();
        let vm = validity_mask(&t).unwrap();
        assert_eq!(vm.len(), 4096);
        assert!((0..n).all(|i| vm.grid_to_dense(i) == Some(i)));
    }

    #[test]
    fn empty_mask_errors() {
        let res = BrdfResolution::new(1, 1, 2).unwrap();
        let t = BrdfTensor::from_linear(res, &[0.0; 6], &[false, false]).unwrap();
        assert!(matches!(validity_mask(&t), Err(Error::EmptyMask)));
    }

    #[test]
    fn corpus_mask_intersects() {
        let res = BrdfResolution::new(1, 1, 3).unwrap();
        let a = BrdfTensor::from_linear(res, &[0.1; 9], &[true, true, false]).unwrap();
        let b = BrdfTensor::from_linear(res, &[0.1; 9], &[false, true, true]).unwrap();
        assert_eq!(corpus_mask(&[a, b]).unwrap().grid_indices(), &[1]);
        assert!(matches!(corpus_mask(&[]), Err(Error::EmptyCorpus)));
    }
}
