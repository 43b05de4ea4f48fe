use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("no valid cells in mask")]
    EmptyMask,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("provenance mismatch: expected {expected}, found {found}")]
    ProvenanceMismatch { expected: String, found: String },
    #[error("inconsistent mask: {0}")]
    InconsistentMask(String),
    #[error("invalid atom count k={k} (must satisfy {constraint})")]
    InvalidK { k: usize, constraint: String },
    #[error("matrix is numerically singular: {0}")]
    Singular(String),
    #[error("selected dictionary columns became linearly dependent after {selected} samples")]
    RankCollapse { selected: usize },
    #[error("sample budget m={m} exceeds min(k, n)={limit}")]
    BudgetTooLarge { m: usize, limit: usize },
    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dense row {0} is not covered by the row map")]
    UnmappedRow(usize),
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("coherence assumption violated: mu1 = {0} >= 1/2")]
    AssumptionViolated(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("enumeration of C({n}, {m}) subsets exceeds the limit of {limit}")]
    TooLarge { n: usize, m: usize, limit: u64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
