//! Pipeline configuration file.
//!
//! TOML with one table per stage; every key is optional:
//!
//! ```toml
//! [corpus]
//! source = "synthetic"      # or "directory"
//! path = "corpus/"          # MERL files, when source = "directory"
//! seed = 42
//! count = 50
//! resolution = [16, 16, 16]
//!
//! [mapping]
//! epsilon = 1e-3
//! reference = "median"      # or "mean"
//!
//! [dictionary]
//! k = 20                    # omit to couple k to the sample count
//!
//! [selection]
//! m = [5, 10, 20]
//! threshold = 0.5           # squared-Frobenius stop instead of a budget
//! max_iters = 40
//! normalize_columns = false
//!
//! [reconstruction]
//! eta = 40.0
//!
//! [evaluation]
//! folds = 5
//! seed = 42
//! random_draws = 20
//! noise_sigma = 0.0
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use frost_brdf::bundle::content_hash;
use frost_brdf::eval::{ExperimentConfig, KPolicy};
use frost_brdf::frost::{ResidualMode, SompOptions, StoppingRule};
use frost_brdf::merl::BrdfResolution;
use frost_brdf::reconstruct::DEFAULT_ETA;
use frost_brdf::transform::{ReferenceStatistic, DEFAULT_EPSILON};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    #[default]
    Synthetic,
    Directory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub source: CorpusSource,
    pub path: Option<PathBuf>,
    pub seed: u64,
    pub count: usize,
    pub resolution: [usize; 3],
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            source: CorpusSource::Synthetic,
            path: None,
            seed: 42,
            count: 50,
            resolution: [16, 16, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingSection {
    pub epsilon: f64,
    pub reference: ReferenceStatistic,
}

impl Default for MappingSection {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            reference: ReferenceStatistic::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySection {
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub m: Vec<usize>,
    pub threshold: Option<f64>,
    pub max_iters: Option<usize>,
    pub normalize_columns: bool,
    pub recompute_residual: bool,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            m: vec![5, 10, 20],
            threshold: None,
            max_iters: None,
            normalize_columns: false,
            recompute_residual: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSection {
    pub eta: f64,
}

impl Default for ReconstructionSection {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub folds: usize,
    pub seed: u64,
    pub random_draws: usize,
    pub noise_sigma: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 42,
            random_draws: 20,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub mapping: MappingSection,
    pub dictionary: DictionarySection,
    pub selection: SelectionSection,
    pub reconstruction: ReconstructionSection,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_owned()));
        let [a, b, c] = self.corpus.resolution;
        if a == 0 || b == 0 || c == 0 {
            return bad("corpus.resolution entries must be >= 1");
        }
        if self.corpus.source == CorpusSource::Directory && self.corpus.path.is_none() {
            return bad("corpus.path is required when corpus.source = \"directory\"");
        }
        if self.corpus.count == 0 {
            return bad("corpus.count must be >= 1");
        }
        if !(self.mapping.epsilon > 0.0 && self.mapping.epsilon.is_finite()) {
            return bad("mapping.epsilon must be > 0");
        }
        if self.dictionary.k == Some(0) {
            return bad("dictionary.k must be >= 1");
        }
        if self.selection.m.is_empty() || self.selection.m.contains(&0) {
            return bad("selection.m must list sample counts >= 1");
        }
        if self.selection.threshold.is_some_and(|t| !(t >= 0.0)) {
            return bad("selection.threshold must be >= 0");
        }
        if !(self.reconstruction.eta >= 0.0 && self.reconstruction.eta.is_finite()) {
            return bad("reconstruction.eta must be >= 0");
        }
        if self.evaluation.folds < 2 {
            return bad("evaluation.folds must be >= 2");
        }
        if !(self.evaluation.noise_sigma >= 0.0) {
            return bad("evaluation.noise_sigma must be >= 0");
        }
        Ok(())
    }

    /// Checks that every sample count fits the dictionary size; only matters
    /// to commands that select samples.
    pub fn validate_sweep(&self) -> Result<(), CliError> {
        self.validate()?;
        if let Some(k) = self.dictionary.k {
            if let Some(m) = self.selection.m.iter().find(|&&m| m > k) {
                return Err(CliError::Config(format!(
                    "selection.m contains {m}, above dictionary.k = {k}"
                )));
            }
        }
        Ok(())
    }

    /// Hash of the canonical JSON form, embedded in every artifact. Where
    /// outputs go does not affect the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        content_hash(
            serde_json::to_string(&c)
                .expect("config serialises")
                .as_bytes(),
        )
    }

    pub fn resolution(&self) -> Result<BrdfResolution, CliError> {
        let [a, b, c] = self.corpus.resolution;
        BrdfResolution::new(a, b, c).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn k_policy(&self) -> KPolicy {
        self.dictionary.k.map_or(KPolicy::Coupled, KPolicy::Fixed)
    }

    pub fn somp_options(&self) -> SompOptions {
        SompOptions {
            normalize_columns: self.selection.normalize_columns,
            residual_mode: if self.selection.recompute_residual {
                ResidualMode::Recompute
            } else {
                ResidualMode::Incremental
            },
        }
    }

    pub fn stopping_rule(&self, m: usize) -> StoppingRule {
        match self.selection.threshold {
            Some(epsilon) => StoppingRule::ErrorThreshold {
                epsilon,
                max_iters: self.selection.max_iters,
            },
            None => StoppingRule::SampleBudget(m),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            m_values: self.selection.m.clone(),
            k_policy: self.k_policy(),
            folds: self.evaluation.folds,
            seed: self.evaluation.seed,
            eta: self.reconstruction.eta,
            epsilon: self.mapping.epsilon,
            reference_statistic: self.mapping.reference,
            random_draws: self.evaluation.random_draws,
            noise_sigma: self.evaluation.noise_sigma,
            somp: self.somp_options(),
        }
    }
}
