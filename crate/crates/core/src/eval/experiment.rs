use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{assemble_training_matrix, train_pca, truncate, PcaDictionary};
use crate::error::{Error, Result};
use crate::frost::{somp_select, SompOptions, StoppingRule, SupportSet};
use crate::merl::{corpus_mask, BrdfTensor, ValidityMap};
use crate::reconstruct::{measure, reconstruct_full, ReconstructionOptions, DEFAULT_ETA};
use crate::rng::{stream_rng, Stream};
use crate::transform::{
    compute_reference, log_relative_map, MappedBrdf, ReferenceBrdf, ReferenceStatistic,
    DEFAULT_EPSILON,
};

use super::folds::kfold_split;
use super::metrics::{mse_mapped, snr_db};
use super::oracle::random_support;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "k")]
pub enum KPolicy {
    /// One atom per sample (`k = m`).
    #[default]
    Coupled,
    Fixed(usize),
}

impl KPolicy {
    pub fn atoms_for(&self, m: usize) -> usize {
        match self {
            KPolicy::Coupled => m,
            KPolicy::Fixed(k) => *k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m_values: Vec<usize>,
    pub k_policy: KPolicy,
    pub folds: usize,
    pub seed: u64,
    pub eta: f64,
    pub epsilon: f64,
    pub reference_statistic: ReferenceStatistic,
    /// Random supports drawn per fold and sample count.
    pub random_draws: usize,
    /// Standard deviation of additive Gaussian noise on mapped measurements.
    pub noise_sigma: f64,
    pub somp: SompOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m_values: (1..=12).map(|i| 5 * i).collect(),
            k_policy: KPolicy::Coupled,
            folds: 10,
            seed: 0,
            eta: DEFAULT_ETA,
            epsilon: DEFAULT_EPSILON,
            reference_statistic: ReferenceStatistic::Median,
            random_draws: 20,
            noise_sigma: 0.0,
            somp: SompOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.m_values.contains(&0) {
            return Err(Error::Parameter(
                "m values must be non-empty and >= 1".into(),
            ));
        }
        if let KPolicy::Fixed(k) = self.k_policy {
            if let Some(&m) = self.m_values.iter().find(|&&m| m > k) {
                return Err(Error::BudgetTooLarge { m, limit: k });
            }
        }
        if !(self.eta >= 0.0) || !(self.epsilon > 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Parameter(
                "eta and noise must be >= 0, epsilon > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Frost,
    Random,
}

/// One test material reconstructed at one support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub fold: usize,
    pub material: String,
    pub m: usize,
    pub k: usize,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draw: Option<usize>,
    #[serde(with = "float_or_sentinel")]
    pub mse: f64,
    #[serde(with = "float_or_sentinel")]
    pub inverse_mse: f64,
    #[serde(with = "float_or_sentinel")]
    pub snr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per fold and sample count: the FROST support and aggregate errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub m: usize,
    pub k: usize,
    pub train_materials: usize,
    pub test_materials: usize,
    pub support: Vec<usize>,
    pub residual_history: Vec<f64>,
    pub training_residual: f64,
    #[serde(with = "float_or_sentinel")]
    pub frost_mean_mse: f64,
    #[serde(with = "float_or_sentinel")]
    pub random_mean_mse: f64,
    /// Wall-clock seconds spent in sample selection.
    pub selection_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<ReportRecord>,
    pub folds: Vec<FoldSummary>,
}

/// Serialises non-finite floats as the strings `inf`, `-inf` and `nan`.
pub mod float_or_sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float `{other}`"))),
            },
        }
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

struct FoldContext<'a> {
    fold: usize,
    config: &'a ExperimentConfig,
    map: &'a ValidityMap,
    reference: ReferenceBrdf,
    dictionary: PcaDictionary,
    test: Vec<(String, MappedBrdf)>,
    train_count: usize,
}

impl FoldContext<'_> {
    fn evaluate_support(
        &self,
        dict: &PcaDictionary,
        support: &SupportSet,
        method: Method,
        m: usize,
        draw: Option<usize>,
    ) -> Vec<ReportRecord> {
        let opts = ReconstructionOptions {
            eta: self.config.eta,
            atoms: None,
        };
        let noise = (self.config.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, self.config.noise_sigma).expect("sigma checked"));
        self.test
            .iter()
            .enumerate()
            .map(|(ti, (name, truth))| {
                let outcome = (|| -> Result<(f64, f64, f64)> {
                    let mut samples = measure(truth, support, name)?;
                    if let Some(dist) = &noise {
                        let lane = ((self.fold as u64) << 40)
                            | ((m as u64) << 24)
                            | ((draw.map_or(0, |d| d + 1) as u64) << 12)
                            | ti as u64;
                        let mut rng = stream_rng(self.config.seed, Stream::Noise, lane);
                        for ch in samples.values.iter_mut() {
                            ch.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
                        }
                    }
                    let rec = reconstruct_full(&samples, dict, &self.reference, self.map, &opts)?;
                    let err = mse_mapped(truth, &rec.mapped)?;
                    Ok((err.mse, err.inverse, snr_db(truth, &rec.mapped)?))
                })();
                let (mse, inverse_mse, snr, error) = match outcome {
                    Ok((a, b, c)) => (a, b, c, None),
                    Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
                };
                ReportRecord {
                    fold: self.fold,
                    material: name.clone(),
                    m,
                    k: dict.k(),
                    method,
                    draw,
                    mse,
                    inverse_mse,
                    snr_db: snr,
                    error,
                }
            })
            .collect()
    }

    fn run_m(&self, m: usize) -> Result<(FoldSummary, Vec<ReportRecord>)> {
        let k = self.config.k_policy.atoms_for(m);
        let dict = truncate(&self.dictionary, k)?;
        let started = Instant::now();
        let support = somp_select(
            dict.inverse(),
            dict.coefficients(),
            StoppingRule::SampleBudget(m),
            &self.config.somp,
        )?;
        let selection_seconds = started.elapsed().as_secs_f64();

        let mut records = self.evaluate_support(&dict, &support, Method::Frost, m, None);
        let frost_mean_mse = mean(records.iter().map(|r| r.mse));
        let mut random = Vec::new();
        for draw in 0..self.config.random_draws {
            let lane = ((self.fold as u64) << 32) | ((m as u64) << 16) | draw as u64;
            let mut rng = stream_rng(self.config.seed, Stream::Baseline, lane);
            let baseline = random_support(&mut rng, dict.n(), m)?;
            random.extend(self.evaluate_support(&dict, &baseline, Method::Random, m, Some(draw)));
        }
        let random_mean_mse = mean(random.iter().map(|r| r.mse));
        records.extend(random);

        let summary = FoldSummary {
            fold: self.fold,
            m,
            k,
            train_materials: self.train_count,
            test_materials: self.test.len(),
            training_residual: support.final_residual().unwrap_or(f64::NAN),
            residual_history: support.residual_history().to_vec(),
            support: support.indices().to_vec(),
            frost_mean_mse,
            random_mean_mse,
            selection_seconds,
        };
        Ok((summary, records))
    }
}

fn prepare_fold<'a>(
    fold: usize,
    config: &'a ExperimentConfig,
    map: &'a ValidityMap,
    corpus: &BTreeMap<&str, &BrdfTensor>,
    train_ids: &[String],
    test_ids: &[String],
) -> Result<FoldContext<'a>> {
    let train: Vec<BrdfTensor> = train_ids
        .iter()
        .map(|id| corpus[id.as_str()].clone())
        .collect();
    let reference = compute_reference(&train, map, config.epsilon, config.reference_statistic)?;
    let mapped_train: Vec<(String, MappedBrdf)> = train_ids
        .iter()
        .zip(&train)
        .map(|(id, b)| Ok((id.clone(), log_relative_map(b, &reference, map)?)))
        .collect::<Result<_>>()?;
    let matrix = assemble_training_matrix(&mapped_train, map)?;
    let k_max = config
        .m_values
        .iter()
        .map(|&m| config.k_policy.atoms_for(m))
        .max()
        .expect("validated non-empty");
    let dictionary = train_pca(&matrix, k_max)?;
    let test = test_ids
        .iter()
        .map(|id| {
            Ok((
                id.clone(),
                log_relative_map(corpus[id.as_str()], &reference, map)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(FoldContext {
        fold,
        config,
        map,
        reference,
        dictionary,
        test,
        train_count: train_ids.len(),
    })
}

/// Cross-validated comparison of FROST supports against random supports.
///
/// Each fold trains its reference and dictionary on the training split only.
/// Rows are the cells valid in every corpus material.
pub fn run_experiment(
    config: &ExperimentConfig,
    corpus: &[(String, BrdfTensor)],
) -> Result<ExperimentReport> {
    config.validate()?;
    let tensors: Vec<BrdfTensor> = corpus.iter().map(|(_, t)| t.clone()).collect();
    let map = corpus_mask(&tensors)?;
    drop(tensors);
    let by_id: BTreeMap<&str, &BrdfTensor> =
        corpus.iter().map(|(id, t)| (id.as_str(), t)).collect();
    if by_id.len() != corpus.len() {
        return Err(Error::Parameter("material ids must be unique".into()));
    }
    let ids: Vec<String> = corpus.iter().map(|(id, _)| id.clone()).collect();
    let plan = kfold_split(&ids, config.folds, config.seed)?;

    let per_fold: Vec<Result<(Vec<FoldSummary>, Vec<ReportRecord>)>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let ctx = prepare_fold(
                fold,
                config,
                &map,
                &by_id,
                &plan.train(fold),
                plan.test(fold),
            )?;
            let mut summaries = Vec::new();
            let mut records = Vec::new();
            for &m in &config.m_values {
                let (s, r) = ctx.run_m(m)?;
                log::debug!(
                    "fold {fold} m {m}: frost {:.4e} random {:.4e}",
                    s.frost_mean_mse,
                    s.random_mean_mse
                );
                summaries.push(s);
                records.extend(r);
            }
            Ok((summaries, records))
        })
        .collect();

    let mut report = ExperimentReport {
        config: config.clone(),
        records: Vec::new(),
        folds: Vec::new(),
    };
    for result in per_fold {
        let (s, r) = result?;
        report.folds.extend(s);
        report.records.extend(r);
    }
    Ok(report)
}

/// Aggregate over folds for one method and sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub m: usize,
    pub frost_mse: f64,
    pub random_mse: f64,
}

impl SeriesPoint {
    pub fn frost_inverse(&self) -> f64 {
        1.0 / self.frost_mse
    }

    pub fn random_inverse(&self) -> f64 {
        1.0 / self.random_mse
    }
}

impl ExperimentReport {
    /// Mean test MSE per sample count, averaged over folds.
    pub fn series(&self) -> Vec<SeriesPoint> {
        self.config
            .m_values
            .iter()
            .map(|&m| {
                let folds: Vec<&FoldSummary> = self.folds.iter().filter(|f| f.m == m).collect();
                SeriesPoint {
                    m,
                    frost_mse: mean(folds.iter().map(|f| f.frost_mean_mse)),
                    random_mse: mean(folds.iter().map(|f| f.random_mean_mse)),
                }
            })
            .collect()
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:>4} {:>4} {:>14} {:>14} {:>14} {:>14} {:>6}",
            "m", "k", "frost_mse", "random_mse", "frost_inv", "random_inv", "wins"
        )
        .unwrap();
        for p in self.series() {
            let folds: Vec<&FoldSummary> = self.folds.iter().filter(|f| f.m == p.m).collect();
            let wins = folds
                .iter()
                .filter(|f| f.frost_mean_mse < f.random_mean_mse)
                .count();
            writeln!(
                s,
                "{:>4} {:>4} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>3}/{:<2}",
                p.m,
                self.config.k_policy.atoms_for(p.m),
                p.frost_mse,
                p.random_mse,
                p.frost_inverse(),
                p.random_inverse(),
                wins,
                folds.len()
            )
            .unwrap();
        }
        s
    }

    /// `m,frost_inverse_mse,random_inverse_mse` rows for plotting.
    pub fn series_csv(&self) -> String {
        let mut s = String::from("m,frost_mse,random_mse,frost_inverse_mse,random_inverse_mse\n");
        for p in self.series() {
            writeln!(
                s,
                "{},{:e},{:e},{:e},{:e}",
                p.m,
                p.frost_mse,
                p.random_mse,
                p.frost_inverse(),
                p.random_inverse()
            )
            .unwrap();
        }
        s
    }

    /// Writes `report.jsonl`, `folds.jsonl`, `summary.txt`, `series.csv`
    /// and `timings.csv` into `dir`. Only `folds.jsonl` and `timings.csv`
    /// carry wall-clock values.
    pub fn write(&self, dir: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut report = String::new();
        writeln!(
            report,
            "{}",
            serde_json::json!({"kind": "header", "config_hash": config_hash, "config": self.config})
        )
        .unwrap();
        for r in &self.records {
            report.push_str(&json_line(r));
        }
        let mut folds = String::new();
        for f in &self.folds {
            folds.push_str(&json_line(f));
        }
        let mut timings = String::from("fold,m,k,selection_seconds\n");
        for f in &self.folds {
            writeln!(
                timings,
                "{},{},{},{:e}",
                f.fold, f.m, f.k, f.selection_seconds
            )
            .unwrap();
        }
        let summary = format!("config {config_hash}\n{}", self.summary_table());
        for (name, body) in [
            ("report.jsonl", report),
            ("folds.jsonl", folds),
            ("summary.txt", summary),
            ("series.csv", self.series_csv()),
            ("timings.csv", timings),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report rows serialise") + "\n"
}

/// Draws `count` random supports, exposed for statistical checks.
pub fn random_supports(seed: u64, n: usize, m: usize, count: usize) -> Result<Vec<SupportSet>> {
    (0..count)
        .map(|i| random_support(&mut stream_rng(seed, Stream::Baseline, i as u64), n, m))
        .collect()
}
