//! On-disk artifacts: the trained dictionary bundle and support records.
//!
//! A bundle is a directory holding `manifest.json` and `arrays.bin`. The
//! manifest lists every array with its element type, length and byte offset
//! into `arrays.bin`; all numbers are little-endian. Matrices are stored
//! column-major. The bundle hash is the truncated SHA-256 of `arrays.bin`
//! plus the manifest's semantic fields, so support records can name the exact
//! dictionary they were computed against.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::PcaDictionary;
use crate::error::{Error, Result};
use crate::frost::SupportSet;
use crate::merl::{BrdfResolution, DirectionDegrees, ValidityMap};
use crate::transform::{ReferenceBrdf, ReferenceStatistic};

pub const BUNDLE_FORMAT: &str = "frost-dictionary";
pub const BUNDLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARRAYS_FILE: &str = "arrays.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: String,
    pub len: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub version: u32,
    pub resolution: BrdfResolution,
    pub n_valid: usize,
    pub k: usize,
    pub t: usize,
    pub epsilon: f64,
    pub reference_statistic: ReferenceStatistic,
    pub reference_id: String,
    pub materials: Vec<String>,
    pub config_hash: String,
    pub data_sha256: String,
    pub arrays: Vec<ArrayEntry>,
}

/// Everything needed to select samples and reconstruct against one
/// training run.
#[derive(Debug, Clone)]
pub struct DictionaryBundle {
    pub row_map: ValidityMap,
    pub reference: ReferenceBrdf,
    pub reference_statistic: ReferenceStatistic,
    pub dictionary: PcaDictionary,
    pub materials: Vec<String>,
    pub config_hash: String,
}

struct ArrayWriter {
    bytes: Vec<u8>,
    entries: Vec<ArrayEntry>,
}

impl ArrayWriter {
    fn f64s(&mut self, name: &str, values: &[f64]) {
        self.entries.push(ArrayEntry {
            name: name.into(),
            dtype: "f64".into(),
            len: values.len(),
            offset: self.bytes.len(),
        });
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn u64s(&mut self, name: &str, values: impl ExactSizeIterator<Item = u64>) {
        self.entries.push(ArrayEntry {
            name: name.into(),
            dtype: "u64".into(),
            len: values.len(),
            offset: self.bytes.len(),
        });
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_array<'a>(
    manifest: &BundleManifest,
    bytes: &'a [u8],
    name: &str,
    dtype: &str,
    len: usize,
) -> Result<&'a [u8]> {
    let e = manifest
        .arrays
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Format(format!("bundle is missing array {name}")))?;
    if e.dtype != dtype || e.len != len {
        return Err(Error::Format(format!(
            "array {name} is {} x {}, expected {dtype} x {len}",
            e.dtype, e.len
        )));
    }
    bytes
        .get(e.offset..e.offset + 8 * len)
        .ok_or_else(|| Error::Format(format!("array {name} runs past the data file")))
}

fn decode_f64(b: &[u8]) -> Vec<f64> {
    b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

fn short_hash(h: Sha256) -> String {
    hex::encode(&h.finalize()[..8])
}

/// Truncated SHA-256 (16 hex digits) used to tag artifacts.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    short_hash(h)
}

impl DictionaryBundle {
    fn encode(&self) -> (BundleManifest, Vec<u8>) {
        let d = &self.dictionary;
        let mut w = ArrayWriter {
            bytes: Vec::new(),
            entries: Vec::new(),
        };
        w.u64s(
            "row_map",
            self.row_map.grid_indices().iter().map(|&g| g as u64),
        );
        w.f64s("reference", self.reference.values());
        w.f64s("mean", d.mean().as_slice());
        w.f64s("sigma", d.sigma());
        w.f64s("spectrum", d.spectrum());
        w.f64s("atoms", d.atoms().as_slice());
        w.f64s("coefficients", d.coefficients().as_slice());
        let data_sha256 = hex::encode(Sha256::digest(&w.bytes));
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            resolution: self.row_map.resolution(),
            n_valid: d.n(),
            k: d.k(),
            t: d.t(),
            epsilon: self.reference.epsilon(),
            reference_statistic: self.reference_statistic,
            reference_id: self.reference.id().to_owned(),
            materials: self.materials.clone(),
            config_hash: self.config_hash.clone(),
            data_sha256,
            arrays: w.entries,
        };
        (manifest, w.bytes)
    }

    /// Content hash identifying this bundle.
    pub fn hash(&self) -> String {
        let (manifest, _) = self.encode();
        manifest_hash(&manifest)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<String> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (manifest, bytes) = self.encode();
        let data_path = dir.join(ARRAYS_FILE);
        fs::write(&data_path, &bytes).map_err(|e| Error::io(&data_path, e))?;
        let json =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        let man_path = dir.join(MANIFEST_FILE);
        fs::write(&man_path, json + "\n").map_err(|e| Error::io(&man_path, e))?;
        Ok(manifest_hash(&manifest))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let man_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
        let m: BundleManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.format != BUNDLE_FORMAT || m.version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle {} v{}",
                m.format, m.version
            )));
        }
        let data_path = dir.join(ARRAYS_FILE);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != m.data_sha256 {
            return Err(Error::Format(
                "bundle data does not match its checksum".into(),
            ));
        }
        let (n, k, t) = (m.n_valid, m.k, m.t);
        let rows: Vec<usize> = read_array(&m, &bytes, "row_map", "u64", n)?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
            .collect();
        let row_map = ValidityMap::from_grid_indices(m.resolution, rows)?;
        let reference = ReferenceBrdf::new(
            decode_f64(read_array(&m, &bytes, "reference", "f64", n)?),
            m.epsilon,
        )?;
        if reference.id() != m.reference_id {
            return Err(Error::ProvenanceMismatch {
                expected: m.reference_id.clone(),
                found: reference.id().to_owned(),
            });
        }
        let spectrum_len = m
            .arrays
            .iter()
            .find(|e| e.name == "spectrum")
            .map(|e| e.len)
            .unwrap_or(k);
        let dictionary = PcaDictionary::from_parts(
            DVector::from_vec(decode_f64(read_array(&m, &bytes, "mean", "f64", n)?)),
            DMatrix::from_vec(
                n,
                k,
                decode_f64(read_array(&m, &bytes, "atoms", "f64", n * k)?),
            ),
            DMatrix::from_vec(
                k,
                t,
                decode_f64(read_array(&m, &bytes, "coefficients", "f64", k * t)?),
            ),
            decode_f64(read_array(&m, &bytes, "sigma", "f64", k)?),
            decode_f64(read_array(&m, &bytes, "spectrum", "f64", spectrum_len)?),
        )?;
        Ok(Self {
            row_map,
            reference,
            reference_statistic: m.reference_statistic,
            dictionary,
            materials: m.materials,
            config_hash: m.config_hash,
        })
    }
}

fn manifest_hash(m: &BundleManifest) -> String {
    let mut h = Sha256::new();
    h.update(m.data_sha256.as_bytes());
    h.update(m.config_hash.as_bytes());
    for name in &m.materials {
        h.update(name.as_bytes());
        h.update([0]);
    }
    h.update(m.epsilon.to_le_bytes());
    short_hash(h)
}

pub const SUPPORT_HEADER: &str = "# frost-support v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SupportEntry {
    pub dense_row: usize,
    pub grid_index: usize,
    pub direction: DirectionDegrees,
    pub residual: Option<f64>,
}

/// Text record of a selected support, one line per sample in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportRecord {
    pub bundle_hash: String,
    pub config_hash: String,
    pub method: String,
    pub resolution: BrdfResolution,
    pub entries: Vec<SupportEntry>,
}

impl SupportRecord {
    pub fn from_support(
        support: &SupportSet,
        row_map: &ValidityMap,
        method: &str,
        bundle_hash: &str,
        config_hash: &str,
    ) -> Result<Self> {
        let dirs = crate::frost::support_to_directions(support, row_map)?;
        let history = support.residual_history();
        let entries = support
            .indices()
            .iter()
            .zip(dirs)
            .enumerate()
            .map(|(i, (&row, d))| SupportEntry {
                dense_row: row,
                grid_index: row_map.dense_to_grid(row).expect("mapped above"),
                direction: d.to_degrees(),
                residual: history.get(i).copied(),
            })
            .collect();
        Ok(Self {
            bundle_hash: bundle_hash.into(),
            config_hash: config_hash.into(),
            method: method.into(),
            resolution: row_map.resolution(),
            entries,
        })
    }

    pub fn to_support(&self) -> SupportSet {
        let indices = self.entries.iter().map(|e| e.dense_row).collect();
        let history = self.entries.iter().filter_map(|e| e.residual).collect();
        SupportSet::new(indices, history)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = self.resolution;
        writeln!(s, "{SUPPORT_HEADER}").unwrap();
        writeln!(s, "bundle {}", self.bundle_hash).unwrap();
        writeln!(s, "config {}", self.config_hash).unwrap();
        writeln!(s, "method {}", self.method).unwrap();
        writeln!(
            s,
            "resolution {} {} {}",
            r.n_theta_h, r.n_theta_d, r.n_phi_d
        )
        .unwrap();
        writeln!(s, "count {}", self.entries.len()).unwrap();
        writeln!(
            s,
            "# rank dense_row grid_index theta_h theta_d phi_d residual"
        )
        .unwrap();
        for (i, e) in self.entries.iter().enumerate() {
            let res = e.residual.map_or("-".to_owned(), |v| format!("{v:e}"));
            writeln!(
                s,
                "{} {} {} {} {} {} {}",
                i + 1,
                e.dense_row,
                e.grid_index,
                e.direction.theta_h,
                e.direction.theta_d,
                e.direction.phi_d,
                res
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("support record: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some(SUPPORT_HEADER) {
            return Err(bad("missing header line"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(key)
                .and_then(|v| v.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(&format!("expected `{key}`, found `{line}`")))
        };
        let bundle_hash = field("bundle")?;
        let config_hash = field("config")?;
        let method = field("method")?;
        let dims: Vec<usize> = field("resolution")?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad resolution")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(bad("resolution needs three values"));
        }
        let resolution = BrdfResolution::new(dims[0], dims[1], dims[2])?;
        let count: usize = field("count")?.parse().map_err(|_| bad("bad count"))?;
        let mut entries = Vec::with_capacity(count);
        for line in lines.filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 7 {
                return Err(bad(&format!("row `{line}` needs 7 columns")));
            }
            let int = |s: &str| {
                s.parse::<i64>()
                    .map_err(|_| bad(&format!("bad integer `{s}`")))
            };
            let residual = match cols[6] {
                "-" => None,
                v => Some(
                    v.parse::<f64>()
                        .map_err(|_| bad(&format!("bad residual `{v}`")))?,
                ),
            };
            entries.push(SupportEntry {
                dense_row: int(cols[1])? as usize,
                grid_index: int(cols[2])? as usize,
                direction: DirectionDegrees {
                    theta_h: int(cols[3])? as i32,
                    theta_d: int(cols[4])? as i32,
                    phi_d: int(cols[5])? as i32,
                },
                residual,
            });
        }
        if entries.len() != count {
            return Err(bad(&format!("count {count} but {} rows", entries.len())));
        }
        Ok(Self {
            bundle_hash,
            config_hash,
            method,
            resolution,
            entries,
        })
    }

    /// Human-readable sample table in degrees.
    pub fn direction_table(&self) -> String {
        let mut s = String::from("  #   theta_h  theta_d  phi_d\n");
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(
                s,
                "{:>3}   {:>7}  {:>7}  {:>5}",
                i + 1,
                e.direction.theta_h,
                e.direction.theta_d,
                e.direction.phi_d
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> SupportRecord {
        let res = BrdfResolution::cube(8).unwrap();
        let map = ValidityMap::from_mask(res, &vec![true; res.cells()]).unwrap();
        let support = SupportSet::new(vec![17, 3, 400], vec![2.5, 1.25, 0.1]);
        SupportRecord::from_support(&support, &map, "frost", "abc", "def").unwrap()
    }

    #[test]
    fn record_text_round_trip() {
        let r = record();
        let text = r.to_text();
        assert!(text.starts_with(SUPPORT_HEADER));
        let back = SupportRecord::parse(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_support().indices(), &[17, 3, 400]);
        assert_eq!(back.to_support().residual_history(), &[2.5, 1.25, 0.1]);
    }

    #[test]
    fn record_without_residuals() {
        let res = BrdfResolution::cube(4).unwrap();
        let map = ValidityMap::from_mask(res, &vec![true; res.cells()]).unwrap();
        let r = SupportRecord::from_support(
            &SupportSet::from_indices(vec![5]),
            &map,
            "random",
            "a",
            "b",
        )
        .unwrap();
        assert!(r.to_text().lines().last().unwrap().ends_with(" -"));
        assert_eq!(SupportRecord::parse(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn malformed_records_rejected() {
        assert!(SupportRecord::parse("nope").is_err());
        let text = record().to_text().replace("count 3", "count 4");
        assert!(SupportRecord::parse(&text).is_err());
    }

    #[test]
    fn table_has_one_line_per_sample() {
        assert_eq!(record().direction_table().lines().count(), 4);
    }
}
