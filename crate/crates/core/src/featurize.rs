//! Document representations.
//!
//! Two kinds of base vector: binary unigram indicators over a vocabulary
//! built from the training split, or dense embeddings read from a sidecar
//! JSONL file. Either can be extended with a confounder block of length C
//! holding `v` at the position of the source and zero elsewhere.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Default scale of the confounder block.
pub const DEFAULT_V: f64 = 10.0;
/// Number of provenance categories handled by the sampler and the CLI.
pub const NUM_SOURCES: usize = 2;

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Dense vectors keyed by document id, all of one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let dim = match vectors.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::EmbeddingFormat("no vectors".into())),
        };
        if dim == 0 {
            return Err(Error::EmbeddingFormat("zero-length vectors".into()));
        }
        if let Some((id, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::EmbeddingFormat(format!(
                "vector for {id:?} has length {}, expected {dim}",
                v.len()
            )));
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }
}

#[derive(Deserialize)]
struct EmbeddingLine {
    id: String,
    vector: Vec<f64>,
}

/// Reads `{"id": ..., "vector": [...]}` lines.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vectors = HashMap::new();
    let mut dim = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let expected = *dim.get_or_insert(row.vector.len());
        if row.vector.len() != expected {
            return Err(Error::EmbeddingFormat(format!(
                "line {}: vector length {} differs from {}",
                idx + 1,
                row.vector.len(),
                expected
            )));
        }
        if vectors.insert(row.id.clone(), row.vector).is_some() {
            return Err(Error::EmbeddingFormat(format!(
                "line {}: duplicate id {:?}",
                idx + 1,
                row.id
            )));
        }
    }
    EmbeddingTable::new(vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Unigram {
        vocabulary: Vec<String>,
        index: HashMap<String, usize>,
    },
    Embedding {
        dim: usize,
        /// Absent for spaces restored from a saved model until vectors are attached.
        table: Option<Arc<EmbeddingTable>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Unigram,
    Embedding,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Unigram => "unigram",
            FeatureKind::Embedding => "embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    pub repr: Representation,
    pub v: f64,
    pub num_sources: usize,
}

impl FeatureSpace {
    /// Unigram space over an arbitrary token list (sorted and deduplicated here).
    pub fn unigram<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocabulary: Vec<String> = tokens
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if vocabulary.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(FeatureSpace {
            repr: Representation::Unigram { vocabulary, index },
            v: DEFAULT_V,
            num_sources: NUM_SOURCES,
        })
    }

    pub fn embedding(table: Arc<EmbeddingTable>) -> Self {
        FeatureSpace {
            repr: Representation::Embedding {
                dim: table.dim(),
                table: Some(table),
            },
            v: DEFAULT_V,
            num_sources: NUM_SOURCES,
        }
    }

    /// Embedding space of known width with no vectors attached.
    pub fn embedding_detached(dim: usize) -> Self {
        FeatureSpace {
            repr: Representation::Embedding { dim, table: None },
            v: DEFAULT_V,
            num_sources: NUM_SOURCES,
        }
    }

    pub fn with_v(mut self, v: f64) -> Self {
        self.v = v;
        self
    }

    pub fn with_num_sources(mut self, num_sources: usize) -> Self {
        self.num_sources = num_sources;
        self
    }

    /// Attaches vectors to an embedding space; errors on width mismatch.
    pub fn attach(&mut self, table: Arc<EmbeddingTable>) -> Result<()> {
        match &mut self.repr {
            Representation::Embedding { dim, table: slot } => {
                if table.dim() != *dim {
                    return Err(Error::EmbeddingFormat(format!(
                        "table has dim {}, space expects {}",
                        table.dim(),
                        dim
                    )));
                }
                *slot = Some(table);
                Ok(())
            }
            Representation::Unigram { .. } => {
                Err(Error::Config("cannot attach embeddings to a unigram space".into()))
            }
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self.repr {
            Representation::Unigram { .. } => FeatureKind::Unigram,
            Representation::Embedding { .. } => FeatureKind::Embedding,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Representation::Unigram { vocabulary, .. } => vocabulary.len(),
            Representation::Embedding { dim, .. } => *dim,
        }
    }

    pub fn vocabulary(&self) -> Option<&[String]> {
        match &self.repr {
            Representation::Unigram { vocabulary, .. } => Some(vocabulary),
            Representation::Embedding { .. } => None,
        }
    }

    /// Base vector for `doc` in this space.
    pub fn vectorize(&self, doc: &Document) -> Result<FeatureVector> {
        match &self.repr {
            Representation::Unigram { .. } => vectorize_unigram(doc, self),
            Representation::Embedding { table, .. } => {
                let table = table.as_ref().ok_or_else(|| {
                    Error::Config("embedding space has no vectors attached".into())
                })?;
                Ok(FeatureVector::dense(table.get(&doc.id)?.to_vec()))
            }
        }
    }
}

/// Vocabulary of every token seen in the training documents.
pub fn build_vocab<'a, I>(train_docs: I) -> Result<FeatureSpace>
where
    I: IntoIterator<Item = &'a Document>,
{
    let tokens: BTreeSet<String> = train_docs
        .into_iter()
        .flat_map(|d| tokenize(&d.text))
        .collect();
    FeatureSpace::unigram(tokens)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseVector {
    /// Sorted indices of the coordinates equal to one.
    Binary { dim: usize, active: Vec<usize> },
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub base: BaseVector,
    pub confounder_block: Option<Vec<f64>>,
}

impl FeatureVector {
    pub fn binary(dim: usize, mut active: Vec<usize>) -> Self {
        active.sort_unstable();
        active.dedup();
        FeatureVector {
            base: BaseVector::Binary { dim, active },
            confounder_block: None,
        }
    }

    pub fn dense(values: Vec<f64>) -> Self {
        FeatureVector {
            base: BaseVector::Dense(values),
            confounder_block: None,
        }
    }

    pub fn base_dim(&self) -> usize {
        match &self.base {
            BaseVector::Binary { dim, .. } => *dim,
            BaseVector::Dense(v) => v.len(),
        }
    }

    /// Base length plus confounder block length.
    pub fn len(&self) -> usize {
        self.base_dim() + self.confounder_block.as_ref().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Base coordinates as a dense vector.
    pub fn base_dense(&self) -> Vec<f64> {
        match &self.base {
            BaseVector::Binary { dim, active } => {
                let mut out = vec![0.0; *dim];
                for &i in active {
                    out[i] = 1.0;
                }
                out
            }
            BaseVector::Dense(v) => v.clone(),
        }
    }

    /// `weights · base`; `weights` must span the base dimension.
    pub fn dot_base(&self, weights: &[f64]) -> f64 {
        match &self.base {
            BaseVector::Binary { active, .. } => active.iter().map(|&i| weights[i]).sum(),
            BaseVector::Dense(v) => v.iter().zip(weights).map(|(x, w)| x * w).sum(),
        }
    }

    /// `out += scale * base`.
    pub fn add_scaled_base(&self, scale: f64, out: &mut [f64]) {
        match &self.base {
            BaseVector::Binary { active, .. } => {
                for &i in active {
                    out[i] += scale;
                }
            }
            BaseVector::Dense(v) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += scale * x;
                }
            }
        }
    }
}

/// Binary indicator vector: coordinate i is 1 iff `vocabulary[i]` occurs in
/// the document. Out-of-vocabulary tokens are ignored.
pub fn vectorize_unigram(doc: &Document, space: &FeatureSpace) -> Result<FeatureVector> {
    match &space.repr {
        Representation::Unigram { vocabulary, index } => {
            let active = tokenize(&doc.text)
                .filter_map(|t| index.get(&t).copied())
                .collect();
            Ok(FeatureVector::binary(vocabulary.len(), active))
        }
        Representation::Embedding { .. } => {
            Err(Error::Config("unigram vectorization needs a unigram space".into()))
        }
    }
}

/// Appends the confounder block: `v` at position `category`, zero elsewhere.
pub fn augment(vec: &FeatureVector, category: usize, space: &FeatureSpace) -> Result<FeatureVector> {
    if category >= space.num_sources {
        return Err(Error::Domain {
            category,
            num_sources: space.num_sources,
        });
    }
    let mut block = vec![0.0; space.num_sources];
    block[category] = space.v;
    Ok(FeatureVector {
        base: vec.base.clone(),
        confounder_block: Some(block),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            label: 0,
            source: 0,
        }
    }

    #[test]
    fn vocabulary_is_sorted_and_lowercased() {
        let docs = [doc("a", "Drug use."), doc("b", "denies drug")];
        let space = build_vocab(&docs).unwrap();
        assert_eq!(space.vocabulary().unwrap(), ["denies", "drug", "use"]);
        assert_eq!(space.dim(), 3);
        assert_eq!(build_vocab(&docs).unwrap(), space);
    }

    #[test]
    fn tokenizer_splits_on_punctuation() {
        let tokens: Vec<String> = tokenize("a-b").collect();
        assert_eq!(tokens, ["a", "b"]);
        let tokens: Vec<String> = tokenize("  --Foo,,BAR42 ").collect();
        assert_eq!(tokens, ["foo", "bar42"]);
    }

    #[test]
    fn empty_vocabulary_is_config_error() {
        let docs = [doc("a", "... !!")];
        assert!(matches!(build_vocab(&docs), Err(Error::Config(_))));
    }

    #[test]
    fn unigram_vectors_are_binary_indicators() {
        let space = FeatureSpace::unigram(["denies", "drug", "use"]).unwrap();
        let v = vectorize_unigram(&doc("x", "drug use"), &space).unwrap();
        assert_eq!(v.base_dense(), [0.0, 1.0, 1.0]);
        let v = vectorize_unigram(&doc("x", "drug drug drug"), &space).unwrap();
        assert_eq!(v.base_dense(), [0.0, 1.0, 0.0]);
        let v = vectorize_unigram(&doc("x", "unseenword"), &space).unwrap();
        assert_eq!(v.base_dense(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn vectorization_ignores_order_and_repetition() {
        let space = FeatureSpace::unigram(["a", "b", "c"]).unwrap();
        let x = vectorize_unigram(&doc("1", "a b c"), &space).unwrap();
        let y = vectorize_unigram(&doc("2", "c c b a a"), &space).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn augment_places_v_at_category() {
        let space = FeatureSpace::unigram(["a", "b"]).unwrap().with_v(10.0);
        let base = vectorize_unigram(&doc("1", "a"), &space).unwrap();
        let aug = augment(&base, 0, &space).unwrap();
        assert_eq!(aug.confounder_block.as_deref(), Some(&[10.0, 0.0][..]));
        assert_eq!(aug.base, base.base);
        assert_eq!(aug.len(), space.dim() + 2);

        let one_hot = space.clone().with_v(1.0);
        let aug = augment(&base, 1, &one_hot).unwrap();
        assert_eq!(aug.confounder_block.as_deref(), Some(&[0.0, 1.0][..]));

        assert!(matches!(augment(&base, 2, &space), Err(Error::Domain { .. })));
    }

    fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn row(id: &str, dim: usize) -> String {
        let v: Vec<f64> = (0..dim).map(|i| i as f64 * 0.01).collect();
        serde_json::json!({"id": id, "vector": v}).to_string()
    }

    #[test]
    fn loads_384_dim_rows() {
        let f = write_lines(&[row("a", 384), row("b", 384)]);
        let table = Arc::new(load_embeddings(f.path()).unwrap());
        let space = FeatureSpace::embedding(table);
        assert_eq!(space.dim(), 384);
        assert_eq!(space.kind(), FeatureKind::Embedding);
    }

    #[test]
    fn mixed_dims_rejected() {
        let f = write_lines(&[row("a", 384), row("b", 3)]);
        assert!(matches!(load_embeddings(f.path()), Err(Error::EmbeddingFormat(_))));
    }

    #[test]
    fn missing_id_lookup_fails() {
        let f = write_lines(&[row("a", 4)]);
        let space = FeatureSpace::embedding(Arc::new(load_embeddings(f.path()).unwrap()));
        assert!(matches!(
            space.vectorize(&doc("zzz", "")),
            Err(Error::MissingEmbedding(id)) if id == "zzz"
        ));
        assert_eq!(space.vectorize(&doc("a", "")).unwrap().base_dim(), 4);
    }

    #[test]
    fn checked_in_embedding_file_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/tiny_embeddings.jsonl");
        let table = load_embeddings(path).unwrap();
        assert_eq!(table.dim(), 384);
        assert!(table.len() >= 2);
    }
}
