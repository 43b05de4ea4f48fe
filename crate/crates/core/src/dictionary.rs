//! Training matrix assembly and the PCA dictionary `D = U Sigma`, `S = V^T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::merl::ValidityMap;
use crate::transform::MappedBrdf;

/// Singular values below this fraction of the largest are treated as zero
/// when inverting the dictionary.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLabel {
    pub material: String,
    pub channel: Channel,
}

/// Mapped training BRDFs as columns, rows restricted to the corpus mask.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    entries: DMatrix<f64>,
    labels: Vec<ColumnLabel>,
    rows: ValidityMap,
    provenance: String,
}

impl TrainingMatrix {
    /// Wraps an arbitrary matrix whose columns come in R, G, B triples; the
    /// materials are named by their position.
    pub fn from_entries(
        entries: DMatrix<f64>,
        row_map: ValidityMap,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if entries.nrows() != row_map.len() {
            return Err(Error::InconsistentMask(format!(
                "{} rows against a mask of {}",
                entries.nrows(),
                row_map.len()
            )));
        }
        if entries.ncols() == 0 || !entries.ncols().is_multiple_of(3) {
            return Err(Error::ShapeMismatch(format!(
                "{} columns is not a whole number of RGB materials",
                entries.ncols()
            )));
        }
        let labels = (0..entries.ncols())
            .map(|j| ColumnLabel {
                material: format!("{}", j / 3),
                channel: Channel::ALL[j % 3],
            })
            .collect();
        Ok(Self {
            entries,
            labels,
            rows: row_map,
            provenance: provenance.into(),
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    pub fn row_map(&self) -> &ValidityMap {
        &self.rows
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Stacks materials as columns, material-major then channel (R, G, B).
pub fn assemble_training_matrix(
    brdfs: &[(String, MappedBrdf)],
    map: &ValidityMap,
) -> Result<TrainingMatrix> {
    let (_, first) = brdfs.first().ok_or(Error::EmptyCorpus)?;
    let provenance = first.provenance().to_owned();
    let n = map.len();
    let mut entries = DMatrix::zeros(n, 3 * brdfs.len());
    let mut labels = Vec::with_capacity(3 * brdfs.len());
    for (i, (name, b)) in brdfs.iter().enumerate() {
        if b.provenance() != provenance {
            return Err(Error::ProvenanceMismatch {
                expected: provenance,
                found: b.provenance().to_owned(),
            });
        }
        if b.rows() != n {
            return Err(Error::InconsistentMask(format!(
                "material {name} has {} rows, mask has {n}",
                b.rows()
            )));
        }
        for ch in Channel::ALL {
            entries
                .column_mut(3 * i + ch.index())
                .copy_from_slice(b.channel(ch.index()));
            labels.push(ColumnLabel {
                material: name.clone(),
                channel: ch,
            });
        }
    }
    Ok(TrainingMatrix {
        entries,
        labels,
        rows: map.clone(),
        provenance,
    })
}

/// Truncated PCA of a training matrix.
#[derive(Debug, Clone)]
pub struct PcaDictionary {
    mean: DVector<f64>,
    atoms: DMatrix<f64>,
    coefficients: DMatrix<f64>,
    sigma: Vec<f64>,
    spectrum: Vec<f64>,
    inverse: DMatrix<f64>,
}

impl PcaDictionary {
    /// Assembles a dictionary from its parts; `spectrum` is the full list of
    /// singular values of the centered training matrix.
    pub fn from_parts(
        mean: DVector<f64>,
        atoms: DMatrix<f64>,
        coefficients: DMatrix<f64>,
        sigma: Vec<f64>,
        spectrum: Vec<f64>,
    ) -> Result<Self> {
        let k = sigma.len();
        if atoms.ncols() != k || coefficients.nrows() != k || mean.len() != atoms.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "atoms {}x{}, coefficients {}x{}, sigma {k}, mean {}",
                atoms.nrows(),
                atoms.ncols(),
                coefficients.nrows(),
                coefficients.ncols(),
                mean.len()
            )));
        }
        let inverse = scaled_transpose_inverse(&atoms, &sigma);
        Ok(Self {
            mean,
            atoms,
            coefficients,
            sigma,
            spectrum,
            inverse,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `D` (n x k).
    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// `S` (k x t).
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Every singular value of the centered training matrix, retained or not.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// `D^+` (k x n).
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    pub fn n(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn t(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Left singular vectors `U = D Sigma^-1`; zero columns where sigma vanishes.
    pub fn left_singular_vectors(&self) -> DMatrix<f64> {
        let mut u = self.atoms.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            let mut col = u.column_mut(j);
            if s > 0.0 {
                col /= s;
            } else {
                col.fill(0.0);
            }
        }
        u
    }

    /// Sum of squared singular values beyond the retained `k`.
    pub fn discarded_energy(&self) -> f64 {
        self.spectrum[self.k()..].iter().map(|s| s * s).sum()
    }
}

// Rows of D^+ are U^T columns scaled by 1/sigma; negligible sigmas give zero rows.
fn scaled_transpose_inverse(atoms: &DMatrix<f64>, sigma: &[f64]) -> DMatrix<f64> {
    let cutoff = sigma.first().copied().unwrap_or(0.0) * RANK_TOLERANCE;
    let mut inv = atoms.transpose();
    for (j, &s) in sigma.iter().enumerate() {
        let mut row = inv.row_mut(j);
        if s > cutoff && s > 0.0 {
            row /= s * s;
        } else {
            row.fill(0.0);
        }
    }
    inv
}

/// Mean-centres the columns of `T` and keeps the leading `k` components.
pub fn train_pca(training: &TrainingMatrix, k: usize) -> Result<PcaDictionary> {
    let t = training.ncols();
    let n = training.nrows();
    if k == 0 || k >= t {
        return Err(Error::InvalidK {
            k,
            constraint: format!("1 <= k < t = {t}"),
        });
    }
    if t > n {
        return Err(Error::InvalidK {
            k,
            constraint: format!("t = {t} <= n = {n}"),
        });
    }
    let x = &training.entries;
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }

    // Thin QR, then SVD of the small t x t factor: X = Q R, R = Ur S Vt.
    let qr = centered.qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, true);
    let ur = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let spectrum: Vec<f64> = order
        .iter()
        .map(|&i| svd.singular_values[i].max(0.0))
        .collect();

    let mut atoms = DMatrix::zeros(n, k);
    let mut coefficients = DMatrix::zeros(k, t);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut u = &q * ur.column(src);
        let mut v = vt.row(src).into_owned();
        // Deterministic sign: largest-magnitude entry of u is positive.
        let pivot = u.iamax();
        if u[pivot] < 0.0 {
            u.neg_mut();
            v.neg_mut();
        }
        atoms.set_column(j, &(u * spectrum[j]));
        coefficients.set_row(j, &v);
    }
    let sigma = spectrum[..k].to_vec();
    PcaDictionary::from_parts(mean, atoms, coefficients, sigma, spectrum)
}

/// Keeps the leading `k` atoms, coefficients and singular values.
pub fn truncate(dict: &PcaDictionary, k: usize) -> Result<PcaDictionary> {
    if k == 0 || k > dict.k() {
        return Err(Error::InvalidK {
            k,
            constraint: format!("1 <= k <= {}", dict.k()),
        });
    }
    PcaDictionary::from_parts(
        dict.mean.clone(),
        dict.atoms.columns(0, k).into_owned(),
        dict.coefficients.rows(0, k).into_owned(),
        dict.sigma[..k].to_vec(),
        dict.spectrum.clone(),
    )
}

/// Moore-Penrose pseudo-inverse of a full-column-rank or full-row-rank matrix.
pub fn dictionary_pseudo_inverse(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = d.shape();
    if n == 0 || k == 0 {
        return Err(Error::Singular("empty matrix".into()));
    }
    let svd = d.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    // min(n, k) singular values: full column rank when k <= n, full row rank otherwise.
    if !(smax > 0.0) || smin <= RANK_TOLERANCE * smax {
        return Err(Error::Singular(format!(
            "{n}x{k} matrix has condition estimate {}",
            smax / smin
        )));
    }
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::Singular(e.to_string()))
}
