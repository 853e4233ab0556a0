//! Robustness sweep: every feasible `(q, alpha_test)` setting × seed gets a
//! fresh shifted split, features built from its training half, a backdoor
//! and a vanilla model, and an AUPRC on the shifted test half.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, Corpus, Document};
use crate::error::{Error, Result};
use crate::featurize::{build_vocab, load_embeddings, EmbeddingTable, FeatureSpace, FeatureVector};
use crate::metrics::{aggregate, auprc, AggregateRow, EvalRecord};
use crate::model::{train_vectors, Mode, ModelConfig};
use crate::shift::{check_feasible, draw_split, split_seed, GridRange, ShiftSetting};

pub mod curves;

/// Either an explicit list of grid values or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValues {
    List(Vec<f64>),
    Range(GridRange),
}

impl GridValues {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridValues::List(v) => v.clone(),
            GridValues::Range(r) => r.points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepresentationSpec {
    Unigram,
    Embedding(PathBuf),
}

impl RepresentationSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "unigram" => Ok(RepresentationSpec::Unigram),
            Some(("embedding", path)) if !path.is_empty() => Ok(RepresentationSpec::Embedding(path.into())),
            _ => Err(Error::Config(format!(
                "representation must be \"unigram\" or \"embedding:<file>\", got {s:?}"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RepresentationSpec::Unigram => "unigram",
            RepresentationSpec::Embedding(_) => "embedding",
        }
    }
}

fn default_representation() -> String {
    "unigram".into()
}
fn default_a0() -> f64 {
    0.5
}
fn default_a1() -> f64 {
    0.2
}
fn default_train_size() -> usize {
    2000
}
fn default_test_size() -> usize {
    500
}
fn default_q() -> GridValues {
    GridValues::Range(GridRange {
        start: 0.1,
        stop: 0.9,
        step: 0.05,
    })
}
fn default_alpha() -> GridValues {
    GridValues::Range(GridRange {
        start: 0.0,
        stop: 10.0,
        step: 0.05,
    })
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_v() -> f64 {
    10.0
}
fn default_l2() -> f64 {
    DEFAULT_SWEEP_L2
}
fn default_modes() -> Vec<Mode> {
    vec![Mode::Backdoor, Mode::Vanilla]
}
fn default_true() -> bool {
    true
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// λ used by sweeps unless configured otherwise. Lighter than the
/// per-model default of 1.0; chosen from pilot sweeps on the reference
/// synthetic corpus.
pub const DEFAULT_SWEEP_L2: f64 = 0.015;

/// Sweep configuration, read from JSON. Omitted fields take the reference
/// protocol's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_representation")]
    pub representation: String,
    #[serde(default = "default_a0")]
    pub a0_train: f64,
    #[serde(default = "default_a1")]
    pub a1_train: f64,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_q")]
    pub q: GridValues,
    #[serde(default = "default_alpha")]
    pub alpha_test: GridValues,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_true")]
    pub parallel: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            corpus: corpus.into(),
            representation: default_representation(),
            a0_train: default_a0(),
            a1_train: default_a1(),
            train_size: default_train_size(),
            test_size: default_test_size(),
            q: default_q(),
            alpha_test: default_alpha(),
            seeds: default_seeds(),
            global_seed: 0,
            v: default_v(),
            l2: default_l2(),
            modes: default_modes(),
            parallel: true,
            output_dir: default_output(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        // Relative paths in the config resolve against its directory.
        if let Some(dir) = path.parent() {
            if cfg.corpus.is_relative() {
                cfg.corpus = dir.join(&cfg.corpus);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
            if let Ok(RepresentationSpec::Embedding(p)) = RepresentationSpec::parse(&cfg.representation) {
                if p.is_relative() {
                    cfg.representation = format!("embedding:{}", dir.join(p).display());
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        RepresentationSpec::parse(&self.representation)?;
        if self.q.points().is_empty() || self.alpha_test.points().is_empty() {
            return Err(Error::Config("q and alpha_test grids must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        self.model_config(Mode::Backdoor).validate()
    }

    pub fn model_config(&self, mode: Mode) -> ModelConfig {
        ModelConfig {
            v: self.v,
            l2_strength: self.l2,
            mode,
            ..Default::default()
        }
    }

    /// Shift settings for every grid point, feasible or not, q-major.
    fn grid(&self) -> Vec<std::result::Result<ShiftSetting, (f64, f64, String)>> {
        let alphas = self.alpha_test.points();
        self.q
            .points()
            .into_iter()
            .flat_map(|q| alphas.iter().map(move |&a| (q, a)))
            .map(|(q, a)| {
                ShiftSetting::new(crate::shift::ShiftParams {
                    a0_train: self.a0_train,
                    a1_train: self.a1_train,
                    q,
                    alpha_test: a,
                    train_size: self.train_size,
                    test_size: self.test_size,
                    seed: 0,
                })
                .map_err(|e| (q, a, e.to_string()))
            })
            .collect()
    }
}

/// A task that produced no AUPRC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub q: f64,
    pub alpha_test: f64,
    pub mode: Mode,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOutcome {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<FailureRecord>,
    /// Grid points that passed the feasibility filter.
    pub feasible_settings: Vec<ShiftSetting>,
    /// Grid points excluded before any task ran, with the reason.
    pub excluded: Vec<(f64, f64, String)>,
}

impl SweepOutcome {
    pub fn aggregated(&self) -> Vec<AggregateRow> {
        aggregate(&self.records)
    }
}

/// Everything a sweep needs in memory.
pub struct SweepInputs<'a> {
    pub corpus: &'a Corpus,
    pub embeddings: Option<Arc<EmbeddingTable>>,
}

/// Loads inputs named by `cfg` and runs the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.corpus)?;
    let embeddings = match RepresentationSpec::parse(&cfg.representation)? {
        RepresentationSpec::Unigram => None,
        RepresentationSpec::Embedding(path) => {
            let table = load_embeddings(&path)?;
            if let Some(d) = corpus.documents().iter().find(|d| !table.contains(&d.id)) {
                return Err(Error::MissingEmbedding(d.id.clone()));
            }
            Some(Arc::new(table))
        }
    };
    run_sweep_with(
        cfg,
        &SweepInputs {
            corpus: &corpus,
            embeddings,
        },
    )
}

pub fn run_sweep_with(cfg: &ExperimentConfig, inputs: &SweepInputs<'_>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let representation = RepresentationSpec::parse(&cfg.representation)?;
    if matches!(representation, RepresentationSpec::Embedding(_)) && inputs.embeddings.is_none() {
        return Err(Error::Config("embedding representation needs an embedding table".into()));
    }
    let pool = inputs.corpus.pool_counts();

    let mut outcome = SweepOutcome::default();
    for entry in cfg.grid() {
        match entry {
            Ok(s) if check_feasible(&s, &pool) => outcome.feasible_settings.push(s),
            Ok(s) => outcome
                .excluded
                .push((s.q(), s.alpha_test(), "pool cannot cover cell counts".into())),
            Err(excluded) => outcome.excluded.push(excluded),
        }
    }

    let tasks: Vec<(ShiftSetting, u64)> = outcome
        .feasible_settings
        .iter()
        .flat_map(|s| {
            cfg.seeds.iter().map(move |&seed| {
                let split = split_seed(cfg.global_seed, s.q(), s.alpha_test(), seed);
                (s.with_seed(split), seed)
            })
        })
        .collect();
    log::info!(
        "{} feasible settings, {} excluded, {} tasks",
        outcome.feasible_settings.len(),
        outcome.excluded.len(),
        tasks.len()
    );

    let run = |(setting, seed): &(ShiftSetting, u64)| run_task(cfg, inputs, &representation, setting, *seed);
    let results: Vec<Vec<std::result::Result<EvalRecord, FailureRecord>>> = if cfg.parallel {
        tasks.par_iter().map(run).collect()
    } else {
        tasks.iter().map(run).collect()
    };

    for r in results.into_iter().flatten() {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(fail) => outcome.failures.push(fail),
        }
    }
    outcome.records.sort_by(|a, b| {
        a.q.total_cmp(&b.q)
            .then(a.alpha_test.total_cmp(&b.alpha_test))
            .then(a.mode.cmp(&b.mode))
            .then(a.representation.cmp(&b.representation))
            .then(a.seed.cmp(&b.seed))
    });
    outcome.failures.sort_by(|a, b| {
        a.q.total_cmp(&b.q)
            .then(a.alpha_test.total_cmp(&b.alpha_test))
            .then(a.mode.cmp(&b.mode))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(outcome)
}

/// Split-level products shared by both modes.
struct PreparedSplit {
    train_x: Vec<FeatureVector>,
    train_y: Vec<u8>,
    train_z: Vec<u8>,
    test_x: Vec<FeatureVector>,
    test_y: Vec<u8>,
    space: FeatureSpace,
}

fn prepare(
    inputs: &SweepInputs<'_>,
    representation: &RepresentationSpec,
    setting: &ShiftSetting,
) -> Result<PreparedSplit> {
    let split = draw_split(setting, inputs.corpus)?;
    let (train, test) = split.documents(inputs.corpus);
    let space = feature_space_for(&train, representation, inputs.embeddings.as_ref())?;
    let vectorize = |docs: &[&Document]| -> Result<Vec<FeatureVector>> {
        docs.iter().map(|d| space.vectorize(d)).collect()
    };
    Ok(PreparedSplit {
        train_x: vectorize(&train)?,
        train_y: train.iter().map(|d| d.label).collect(),
        train_z: train.iter().map(|d| d.source).collect(),
        test_x: vectorize(&test)?,
        test_y: test.iter().map(|d| d.label).collect(),
        space,
    })
}

/// The feature space for one training split. Unigram vocabularies come from
/// the training documents only.
pub fn feature_space_for(
    train: &[&Document],
    representation: &RepresentationSpec,
    embeddings: Option<&Arc<EmbeddingTable>>,
) -> Result<FeatureSpace> {
    match representation {
        RepresentationSpec::Unigram => build_vocab(train.iter().copied()),
        RepresentationSpec::Embedding(_) => embeddings
            .cloned()
            .map(FeatureSpace::embedding)
            .ok_or_else(|| Error::Config("no embedding table loaded".into())),
    }
}

fn run_task(
    cfg: &ExperimentConfig,
    inputs: &SweepInputs<'_>,
    representation: &RepresentationSpec,
    setting: &ShiftSetting,
    seed: u64,
) -> Vec<std::result::Result<EvalRecord, FailureRecord>> {
    let fail = |mode: Mode, reason: String| FailureRecord {
        q: setting.q(),
        alpha_test: setting.alpha_test(),
        mode,
        seed,
        reason,
    };
    let prepared = match prepare(inputs, representation, setting) {
        Ok(p) => p,
        Err(e) => return cfg.modes.iter().map(|&m| Err(fail(m, e.to_string()))).collect(),
    };
    cfg.modes
        .iter()
        .map(|&mode| {
            let model = train_vectors(
                &prepared.train_x,
                &prepared.train_y,
                &prepared.train_z,
                &prepared.space,
                &cfg.model_config(mode),
            )
            .map_err(|e| fail(mode, e.to_string()))?;
            let scores: Vec<f64> = prepared.test_x.iter().map(|x| model.predict(x)).collect();
            let value = auprc(&scores, &prepared.test_y).map_err(|e| fail(mode, e.to_string()))?;
            Ok(EvalRecord {
                q: setting.q(),
                alpha_test: setting.alpha_test(),
                mode,
                representation: representation.label().to_string(),
                v: cfg.v,
                seed,
                auprc: value,
            })
        })
        .collect()
}

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATED_FILE: &str = "aggregated.csv";
pub const FAILURES_FILE: &str = "failures.csv";

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file)))
}

pub fn write_records(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["q", "alpha_test", "mode", "representation", "v", "seed", "auprc"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_aggregated(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "q",
        "alpha_test",
        "mode",
        "representation",
        "v",
        "n",
        "mean",
        "std",
        "single_run",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_failures(failures: &[FailureRecord], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["q", "alpha_test", "mode", "seed", "reason"])?;
    for f in failures {
        w.serialize(f)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes results, aggregated and failure tables into `dir`.
pub fn write_outputs(outcome: &SweepOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = [
        dir.join(RESULTS_FILE),
        dir.join(AGGREGATED_FILE),
        dir.join(FAILURES_FILE),
    ];
    write_records(&outcome.records, &paths[0])?;
    write_aggregated(&outcome.aggregated(), &paths[1])?;
    write_failures(&outcome.failures, &paths[2])?;
    Ok(paths.to_vec())
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_aggregated(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Reads either a per-seed results table or an aggregated one.
pub fn read_any_results(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let is_raw = r.headers()?.iter().any(|h| h == "seed");
    if is_raw {
        Ok(aggregate(&read_records(path)?))
    } else {
        read_aggregated(path)
    }
}

/// Writes one line per failure to stderr-friendly text.
pub fn describe_failures(failures: &[FailureRecord], out: &mut impl Write) -> std::io::Result<()> {
    for f in failures {
        writeln!(
            out,
            "q={} alpha_test={} mode={} seed={}: {}",
            f.q, f.alpha_test, f.mode, f.seed, f.reason
        )?;
    }
    Ok(())
}
