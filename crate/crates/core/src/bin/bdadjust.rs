use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use bdadjust::corpus::{self, generate_synthetic, load_corpus, write_corpus, Document, SynthConfig};
use bdadjust::error::{Error, Result};
use bdadjust::featurize::{load_embeddings, FeatureSpace};
use bdadjust::harness::curves::{emit_curves, CurveOptions};
use bdadjust::harness::{self, describe_failures, ExperimentConfig, RepresentationSpec};
use bdadjust::metrics::auprc;
use bdadjust::model::{self, Mode, ModelConfig};
use bdadjust::shift::{draw_split, enumerate_grid, GridSpec, ShiftParams, ShiftSetting};

#[derive(Parser)]
#[command(name = "bdadjust", version, about = "Backdoor-adjusted text classification under confounding shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-source corpus from a JSON config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count feasible (q, alpha_test) settings for a corpus pool.
    Feasibility {
        #[arg(long)]
        pool: PathBuf,
        /// Grid JSON; defaults to the reference grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Where to write the settings list (JSON).
        #[arg(long, default_value = "settings.json")]
        out: PathBuf,
    },
    /// Draw one shifted train/test split.
    Sample {
        #[arg(long)]
        setting: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
    /// Train a backdoor or vanilla logistic regression.
    Train {
        #[arg(long)]
        train: PathBuf,
        /// `unigram` or `embedding:<file>`.
        #[arg(long, default_value = "unigram")]
        features: String,
        #[arg(long, default_value = "backdoor")]
        mode: String,
        #[arg(long, default_value_t = 10.0)]
        v: f64,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a corpus with a saved model and report AUPRC.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Embedding file for embedding-space models.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Optional CSV of per-document scores.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a robustness sweep from a JSON experiment config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Turn sweep results into per-q curve data and SVG charts.
    Plotdata {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        alpha_train: f64,
        #[arg(long)]
        zero_floor: Option<f64>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg: SynthConfig = read_json(&config)?;
            let corpus = generate_synthetic(&cfg)?;
            write_corpus(corpus.documents(), &out)?;
            let c = corpus.pool_counts();
            for (z, y, n) in c.cells() {
                println!("{} label={y}: {n}", corpus::SOURCE_NAMES[z as usize]);
            }
        }
        Command::Feasibility { pool, grid, out } => {
            let grid: GridSpec = match grid {
                Some(p) => read_json(&p)?,
                None => GridSpec::default(),
            };
            let corpus = load_corpus(&pool)?;
            let settings = enumerate_grid(&corpus.pool_counts(), &grid);
            println!("{} feasible of {} candidates", settings.len(), grid.candidate_count());
            write_json(&settings, &out)?;
        }
        Command::Sample {
            setting,
            corpus,
            out_train,
            out_test,
        } => {
            let params: ShiftParams = read_json(&setting)?;
            let setting = ShiftSetting::new(params)?;
            let corpus = load_corpus(&corpus)?;
            let split = draw_split(&setting, &corpus)?;
            let (train, test) = split.documents(&corpus);
            let owned = |docs: Vec<&Document>| docs.into_iter().cloned().collect::<Vec<_>>();
            write_corpus(&owned(train), &out_train)?;
            write_corpus(&owned(test), &out_test)?;
            println!("train {} documents, test {} documents", split.train.len(), split.test.len());
        }
        Command::Train {
            train,
            features,
            mode,
            v,
            l2,
            out,
        } => {
            let corpus = load_corpus(&train)?;
            let docs: Vec<&Document> = corpus.documents().iter().collect();
            let space = match RepresentationSpec::parse(&features)? {
                RepresentationSpec::Unigram => bdadjust::featurize::build_vocab(docs.iter().copied())?,
                RepresentationSpec::Embedding(path) => FeatureSpace::embedding(Arc::new(load_embeddings(path)?)),
            };
            let cfg = ModelConfig {
                v,
                l2_strength: l2,
                mode: mode.parse::<Mode>()?,
                ..Default::default()
            };
            let m = model::train(&docs, &space, &cfg)?;
            if let Some(d) = m.diagnostics {
                println!(
                    "{} iterations, objective {:.6}, gradient norm {:.2e}{}",
                    d.iterations,
                    d.objective,
                    d.grad_inf_norm,
                    if d.converged { "" } else { " (not converged)" }
                );
            }
            model::save_model(&m, &out)?;
        }
        Command::Score {
            model: model_path,
            corpus,
            embeddings,
            out,
        } => {
            let mut m = model::load_model(&model_path)?;
            if let Some(path) = embeddings {
                m.space.attach(Arc::new(load_embeddings(path)?))?;
            }
            let corpus = load_corpus(&corpus)?;
            let scores: Vec<f64> = corpus
                .documents()
                .iter()
                .map(|d| m.space.vectorize(d).map(|x| m.predict(&x)))
                .collect::<Result<_>>()?;
            let labels: Vec<u8> = corpus.documents().iter().map(|d| d.label).collect();
            match auprc(&scores, &labels) {
                Ok(v) => println!("AUPRC {v:.6}"),
                Err(e) => println!("AUPRC unavailable: {e}"),
            }
            if let Some(path) = out {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["id", "label", "source", "score"])?;
                for (d, s) in corpus.documents().iter().zip(&scores) {
                    w.write_record([d.id.clone(), d.label.to_string(), d.source.to_string(), s.to_string()])?;
                }
                w.flush().map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let outcome = harness::run_sweep(&cfg)?;
            let files = harness::write_outputs(&outcome, &cfg.output_dir)?;
            println!(
                "{} feasible settings, {} results, {} failures",
                outcome.feasible_settings.len(),
                outcome.records.len(),
                outcome.failures.len()
            );
            for f in files {
                println!("wrote {}", f.display());
            }
            if !outcome.failures.is_empty() {
                let _ = describe_failures(&outcome.failures, &mut std::io::stderr());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Plotdata {
            results,
            out,
            alpha_train,
            zero_floor,
        } => {
            let rows = harness::read_any_results(&results)?;
            let opts = CurveOptions {
                alpha_train,
                zero_floor,
            };
            for f in emit_curves(&rows, &opts, &out)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
