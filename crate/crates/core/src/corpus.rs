//! Labeled, source-tagged documents and the synthetic pool generator.
//!
//! Sources are coded `0 = "UW"`, `1 = "MIMIC"`; labels `1` mark a documented
//! positive. On disk a corpus is UTF-8 JSONL with one
//! `{"id", "text", "label", "source"}` object per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Display names for the source codes.
pub const SOURCE_NAMES: [&str; 2] = ["UW", "MIMIC"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: u8,
    pub source: u8,
}

/// Counts per `(source, label)` cell, stored as `[[neg, pos]; 2]` indexed by
/// source then label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellCounts(pub [[usize; 2]; 2]);

impl CellCounts {
    pub fn new(uw_neg: usize, uw_pos: usize, mimic_neg: usize, mimic_pos: usize) -> Self {
        CellCounts([[uw_neg, uw_pos], [mimic_neg, mimic_pos]])
    }

    /// Reference pool sizes: UW 2528 notes (1040 positive), MIMIC 1877 (371 positive).
    pub fn reference_pool() -> Self {
        CellCounts::new(1488, 1040, 1506, 371)
    }

    pub fn get(&self, source: u8, label: u8) -> usize {
        self.0[source as usize][label as usize]
    }

    pub fn set(&mut self, source: u8, label: u8, count: usize) {
        self.0[source as usize][label as usize] = count;
    }

    pub fn source_total(&self, source: u8) -> usize {
        self.0[source as usize].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.source_total(0) + self.source_total(1)
    }

    /// All four `(source, label, count)` cells in `(0,0), (0,1), (1,0), (1,1)` order.
    pub fn cells(&self) -> impl Iterator<Item = (u8, u8, usize)> + '_ {
        (0..2u8).flat_map(move |z| (0..2u8).map(move |y| (z, y, self.get(z, y))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    pool_counts: CellCounts,
}

impl Corpus {
    /// Builds a corpus, validating labels, sources and id uniqueness.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            validate_document(doc)?;
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate document id {:?}", doc.id)));
            }
        }
        let pool_counts = count_cells(&documents);
        Ok(Corpus {
            documents,
            pool_counts,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn pool_counts(&self) -> CellCounts {
        self.pool_counts
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }
}

fn validate_document(doc: &Document) -> Result<()> {
    if doc.label > 1 {
        return Err(Error::Integrity(format!(
            "document {:?} has label {} (expected 0 or 1)",
            doc.id, doc.label
        )));
    }
    if doc.source > 1 {
        return Err(Error::Integrity(format!(
            "document {:?} has source {} (expected 0 or 1)",
            doc.id, doc.source
        )));
    }
    Ok(())
}

fn count_cells(documents: &[Document]) -> CellCounts {
    let mut counts = CellCounts::default();
    for doc in documents {
        counts.0[doc.source as usize][doc.label as usize] += 1;
    }
    counts
}

/// Counts documents per `(source, label)` cell.
pub fn pool_counts(corpus: &Corpus) -> CellCounts {
    count_cells(corpus.documents())
}

/// Wire shape of one corpus line; wide integer fields so out-of-range values
/// surface as integrity errors rather than parse errors.
#[derive(Deserialize)]
struct RawDocument {
    id: String,
    text: String,
    label: i64,
    source: i64,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses JSONL from any reader. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let check = |name: &str, v: i64| -> Result<u8> {
            if v == 0 || v == 1 {
                Ok(v as u8)
            } else {
                Err(Error::Integrity(format!(
                    "line {}: {} must be 0 or 1, got {}",
                    idx + 1,
                    name,
                    v
                )))
            }
        };
        documents.push(Document {
            label: check("label", raw.label)?,
            source: check("source", raw.source)?,
            id: raw.id,
            text: raw.text,
        });
    }
    Corpus::new(documents)
}

pub fn write_corpus(documents: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in documents {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parameters of the synthetic pool.
///
/// Three disjoint word classes: shared noise words, per-source style cues
/// (`s0cue*`, `s1cue*`), and label cues (`drug*`). Source cues make text
/// predictive of provenance; label cues make it predictive of the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_cell: CellCounts,
    pub noise_vocab: usize,
    pub source_cue_vocab: usize,
    pub label_cue_vocab: usize,
    /// Probability that a positive document carries at least one label cue.
    pub cue_strength: f64,
    /// Probability that any token slot holds a source cue.
    pub style_strength: f64,
    /// Inclusive token-count range `[min, max]`.
    pub doc_length: [usize; 2],
    pub seed: u64,
}

impl SynthConfig {
    /// The reference pool used by the robustness experiments: `CellCounts::reference_pool` cell
    /// counts with the default cue settings.
    pub fn reference(seed: u64) -> Self {
        SynthConfig {
            n_per_cell: CellCounts::reference_pool(),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (z, y, n) in self.n_per_cell.cells() {
            if n == 0 {
                return Err(Error::Config(format!("n_per_cell ({z},{y}) must be > 0")));
            }
        }
        for (name, n) in [
            ("noise_vocab", self.noise_vocab),
            ("source_cue_vocab", self.source_cue_vocab),
            ("label_cue_vocab", self.label_cue_vocab),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        for (name, p) in [
            ("cue_strength", self.cue_strength),
            ("style_strength", self.style_strength),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let [lo, hi] = self.doc_length;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "doc_length must satisfy 1 <= min <= max, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_cell: CellCounts::new(10, 10, 10, 10),
            noise_vocab: 2000,
            source_cue_vocab: 30,
            label_cue_vocab: 20,
            cue_strength: 0.6,
            style_strength: 0.1,
            doc_length: [20, 60],
            seed: 0,
        }
    }
}

pub fn noise_word(i: usize) -> String {
    format!("w{i:04}")
}

pub fn source_cue_word(source: u8, i: usize) -> String {
    format!("s{source}cue{i:03}")
}

pub fn label_cue_word(i: usize) -> String {
    format!("drug{i:03}")
}

/// Generates a synthetic pool. Pure function of `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut cells: Vec<(u8, u8)> = Vec::with_capacity(cfg.n_per_cell.total());
    for (z, y, n) in cfg.n_per_cell.cells() {
        cells.extend(std::iter::repeat_n((z, y), n));
    }
    cells.shuffle(&mut rng);

    let [min_len, max_len] = cfg.doc_length;
    let documents = cells
        .into_iter()
        .enumerate()
        .map(|(i, (source, label))| {
            let len = rng.gen_range(min_len..=max_len);
            let mut tokens: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(cfg.style_strength) {
                        source_cue_word(source, rng.gen_range(0..cfg.source_cue_vocab))
                    } else {
                        noise_word(rng.gen_range(0..cfg.noise_vocab))
                    }
                })
                .collect();
            if label == 1 && rng.gen_bool(cfg.cue_strength) {
                let n_cues = rng.gen_range(1..=3);
                for _ in 0..n_cues {
                    let pos = rng.gen_range(0..=tokens.len());
                    tokens.insert(pos, label_cue_word(rng.gen_range(0..cfg.label_cue_vocab)));
                }
            }
            let mut text = tokens.join(" ");
            text.push('.');
            Document {
                id: format!("doc{i:05}"),
                text,
                label,
                source,
            }
        })
        .collect();
    Corpus::new(documents)
}
