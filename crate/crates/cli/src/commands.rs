use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use frost_brdf::bundle::{DictionaryBundle, SupportRecord};
use frost_brdf::dictionary::{assemble_training_matrix, train_pca, truncate, PcaDictionary};
use frost_brdf::eval::{mse_mapped, run_experiment, snr_db, FoldSummary};
use frost_brdf::frost::{cumulative_coherence, somp_select};
use frost_brdf::merl::{corpus_mask, read_merl, write_merl, BrdfTensor};
use frost_brdf::reconstruct::{measure, reconstruct_full, ReconstructionOptions};
use frost_brdf::synthetic::{gen_corpus, MaterialSpec};
use frost_brdf::transform::{compute_reference, log_relative_map};
use log::info;
use serde::Serialize;

use crate::config::{Config, CorpusSource};
use crate::{
    CliError, CoherenceArgs, Command, EvaluateArgs, GenCorpusArgs, ReconstructArgs, SelectArgs,
    SeriesArgs, TrainDictArgs,
};

pub const MERL_EXTENSION: &str = "binary";
pub const CORPUS_MANIFEST: &str = "corpus.json";

pub fn execute(command: Command, config: Config) -> Result<(), CliError> {
    match command {
        Command::GenCorpus(a) => gen_corpus_cmd(a, config),
        Command::TrainDict(a) => train_dict(a, config),
        Command::SelectSamples(a) => select_samples(a, config),
        Command::Reconstruct(a) => reconstruct(a, config),
        Command::Evaluate(a) => evaluate(a, config),
        Command::Coherence(a) => coherence(a, config),
        Command::Series(a) => series(a),
    }
}

fn output_path(explicit: Option<PathBuf>, config: &Config, default: &str) -> PathBuf {
    explicit.unwrap_or_else(|| match &config.output.dir {
        Some(dir) => dir.join(default),
        None => PathBuf::from(default),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| frost_brdf::Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        frost_brdf::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output serialises")
}

/// MERL files in `dir`, sorted by name; the id is the file stem.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<(String, BrdfTensor)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| frost_brdf::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == MERL_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Runtime(format!(
            "no .{MERL_EXTENSION} files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((id, read_merl(p)?))
        })
        .collect()
}

fn corpus_from_config(
    explicit: Option<PathBuf>,
    config: &Config,
) -> Result<Vec<(String, BrdfTensor)>, CliError> {
    let dir = explicit.or_else(|| match config.corpus.source {
        CorpusSource::Directory => config.corpus.path.clone(),
        CorpusSource::Synthetic => None,
    });
    match dir {
        Some(d) => load_corpus_dir(&d),
        None => {
            let res = config.resolution()?;
            info!(
                "generating {} synthetic materials at {:?}",
                config.corpus.count, config.corpus.resolution
            );
            Ok(gen_corpus(config.corpus.seed, config.corpus.count, &res)?
                .into_iter()
                .map(|(spec, t)| (spec.id, t))
                .collect())
        }
    }
}

#[derive(Serialize)]
struct CorpusManifest<'a> {
    seed: u64,
    resolution: [usize; 3],
    config_hash: String,
    materials: &'a [MaterialSpec],
}

fn gen_corpus_cmd(a: GenCorpusArgs, mut config: Config) -> Result<(), CliError> {
    if let Some(s) = a.seed {
        config.corpus.seed = s;
    }
    if let Some(c) = a.count {
        config.corpus.count = c;
    }
    if let Some(r) = a.resolution {
        config.corpus.resolution = r;
    }
    config.validate()?;
    let res = config.resolution()?;
    let out = output_path(a.out, &config, "corpus");
    let corpus = gen_corpus(config.corpus.seed, config.corpus.count, &res)?;
    for (spec, tensor) in &corpus {
        write_merl(tensor, out.join(format!("{}.{MERL_EXTENSION}", spec.id)))?;
    }
    let specs: Vec<MaterialSpec> = corpus.into_iter().map(|(s, _)| s).collect();
    let manifest = CorpusManifest {
        seed: config.corpus.seed,
        resolution: config.corpus.resolution,
        config_hash: config.hash(),
        materials: &specs,
    };
    write_text(
        &out.join(CORPUS_MANIFEST),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n"),
    )?;
    println!(
        "{}",
        json(&serde_json::json!({
            "corpus": out,
            "materials": specs.len(),
            "config_hash": config.hash(),
        }))
    );
    Ok(())
}

fn train_dict(a: TrainDictArgs, mut config: Config) -> Result<(), CliError> {
    if a.k.is_some() {
        config.dictionary.k = a.k;
    }
    config.validate()?;
    let corpus = corpus_from_config(a.corpus, &config)?;
    let k = config.dictionary.k.unwrap_or_else(|| {
        *config
            .selection
            .m
            .iter()
            .max()
            .expect("validated non-empty")
    });
    let tensors: Vec<BrdfTensor> = corpus.iter().map(|(_, t)| t.clone()).collect();
    let map = corpus_mask(&tensors)?;
    let reference = compute_reference(
        &tensors,
        &map,
        config.mapping.epsilon,
        config.mapping.reference,
    )?;
    let mapped = corpus
        .iter()
        .map(|(id, t)| Ok((id.clone(), log_relative_map(t, &reference, &map)?)))
        .collect::<Result<Vec<_>, frost_brdf::Error>>()?;
    let training = assemble_training_matrix(&mapped, &map)?;
    info!(
        "training matrix {} x {}, keeping {k} atoms",
        training.nrows(),
        training.ncols()
    );
    let dictionary = train_pca(&training, k)?;
    let bundle = DictionaryBundle {
        row_map: map,
        reference,
        reference_statistic: config.mapping.reference,
        dictionary,
        materials: corpus.into_iter().map(|(id, _)| id).collect(),
        config_hash: config.hash(),
    };
    let out = output_path(a.out, &config, "dictionary");
    let hash = bundle.save(&out)?;
    println!(
        "{}",
        json(&serde_json::json!({
            "bundle": out,
            "bundle_hash": hash,
            "n": bundle.dictionary.n(),
            "k": bundle.dictionary.k(),
            "t": bundle.dictionary.t(),
            "discarded_energy": bundle.dictionary.discarded_energy(),
            "config_hash": config.hash(),
        }))
    );
    Ok(())
}

/// The bundle's dictionary cut down to `k` atoms.
fn dictionary_at(bundle: &DictionaryBundle, k: usize) -> Result<PcaDictionary, CliError> {
    let have = bundle.dictionary.k();
    if k > have {
        return Err(CliError::Runtime(format!(
            "bundle holds {have} atoms, {k} requested"
        )));
    }
    if k == have {
        Ok(bundle.dictionary.clone())
    } else {
        Ok(truncate(&bundle.dictionary, k)?)
    }
}

fn select_samples(a: SelectArgs, mut config: Config) -> Result<(), CliError> {
    if let Some(m) = a.m {
        config.selection.m = vec![m];
    }
    if a.k.is_some() {
        config.dictionary.k = a.k;
    }
    if a.threshold.is_some() {
        config.selection.threshold = a.threshold;
    }
    config.validate_sweep()?;
    let bundle = DictionaryBundle::load(&a.dict)?;
    let m = *config
        .selection
        .m
        .iter()
        .max()
        .expect("validated non-empty");
    let k = match (config.dictionary.k, config.selection.threshold) {
        (Some(k), _) => k,
        (None, Some(_)) => bundle.dictionary.k(),
        (None, None) => m,
    };
    let dict = dictionary_at(&bundle, k)?;
    let started = Instant::now();
    let support = somp_select(
        dict.inverse(),
        dict.coefficients(),
        config.stopping_rule(m),
        &config.somp_options(),
    )?;
    info!(
        "selected {} samples in {:.3}s",
        support.len(),
        started.elapsed().as_secs_f64()
    );
    let record = SupportRecord::from_support(
        &support,
        &bundle.row_map,
        "frost",
        &bundle.hash(),
        &config.hash(),
    )?;
    let out = output_path(a.out, &config, "support.txt");
    write_text(&out, &record.to_text())?;
    print!("{}", record.direction_table());
    Ok(())
}

fn reconstruct(a: ReconstructArgs, mut config: Config) -> Result<(), CliError> {
    if let Some(eta) = a.eta {
        config.reconstruction.eta = eta;
    }
    config.validate()?;
    let bundle = DictionaryBundle::load(&a.dict)?;
    let text = fs::read_to_string(&a.support).map_err(|e| frost_brdf::Error::Io {
        path: a.support.clone(),
        source: e,
    })?;
    let record = SupportRecord::parse(&text)?;
    let hash = bundle.hash();
    if record.bundle_hash != hash {
        return Err(CliError::Runtime(format!(
            "support was selected against bundle {}, but {} is {hash}",
            record.bundle_hash,
            a.dict.display()
        )));
    }
    let input = read_merl(&a.input)?;
    if input.resolution() != bundle.row_map.resolution() {
        return Err(CliError::Runtime(format!(
            "input resolution {:?} does not match the bundle's {:?}",
            input.resolution(),
            bundle.row_map.resolution()
        )));
    }
    let material = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let truth = log_relative_map(&input, &bundle.reference, &bundle.row_map)?;
    let samples = measure(&truth, &record.to_support(), &material)?;
    let result = reconstruct_full(
        &samples,
        &bundle.dictionary,
        &bundle.reference,
        &bundle.row_map,
        &ReconstructionOptions {
            eta: config.reconstruction.eta,
            atoms: None,
        },
    )?;
    let out = output_path(
        a.out,
        &config,
        &format!("{material}.recon.{MERL_EXTENSION}"),
    );
    write_merl(&result.linear, &out)?;
    let mse = mse_mapped(&truth, &result.mapped)?;
    println!(
        "{}",
        json(&serde_json::json!({
            "material": material,
            "output": out,
            "m": samples.len(),
            "mse": mse.mse,
            "snr_db": snr_db(&truth, &result.mapped)?,
            "bundle_hash": hash,
            "config_hash": config.hash(),
        }))
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs, mut config: Config) -> Result<(), CliError> {
    if let Some(m) = a.m {
        config.selection.m = m;
    }
    if a.k.is_some() {
        config.dictionary.k = a.k;
    }
    if let Some(f) = a.folds {
        config.evaluation.folds = f;
    }
    if let Some(s) = a.seed {
        config.evaluation.seed = s;
    }
    if let Some(d) = a.draws {
        config.evaluation.random_draws = d;
    }
    config.validate_sweep()?;
    let corpus = corpus_from_config(a.corpus, &config)?;
    let started = Instant::now();
    let report = run_experiment(&config.experiment(), &corpus)?;
    info!("evaluation took {:.2}s", started.elapsed().as_secs_f64());
    let out = output_path(a.out, &config, "evaluation");
    report.write(&out, &config.hash())?;
    print!("{}", report.summary_table());
    Ok(())
}

fn coherence(a: CoherenceArgs, mut config: Config) -> Result<(), CliError> {
    if a.k.is_some() {
        config.dictionary.k = a.k;
    }
    config.selection.m = vec![a.m];
    config.validate()?;
    let bundle = DictionaryBundle::load(&a.dict)?;
    let k = config.dictionary.k.unwrap_or(a.m);
    let dict = dictionary_at(&bundle, k)?;
    let mu1 = cumulative_coherence(dict.inverse(), a.m)?;
    println!(
        "{}",
        json(&serde_json::json!({
            "m": a.m,
            "k": k,
            "n": dict.n(),
            "mu1": mu1,
            "bound_applies": mu1 < 0.5,
        }))
    );
    Ok(())
}

fn series(a: SeriesArgs) -> Result<(), CliError> {
    let path = a.report.join("folds.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| frost_brdf::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut by_m: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let f: FoldSummary = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let entry = by_m.entry(f.m).or_default();
        entry.0.push(f.frost_mean_mse);
        entry.1.push(f.random_mean_mse);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("m,frost_mse,random_mse,frost_inverse_mse,random_inverse_mse");
    for (m, (frost, random)) in by_m {
        let (f, r) = (mean(&frost), mean(&random));
        println!("{m},{f:e},{r:e},{:e},{:e}", 1.0 / f, 1.0 / r);
    }
    Ok(())
}
