//! L2-regularized logistic regression with backdoor-adjusted prediction.
//!
//! Backdoor mode trains on base features plus the confounder block for the
//! true source, then predicts by marginalizing the source out:
//!
//! ```text
//! P(y=1 | x) = Σ_c P(z_c) · σ(β0 + β1·x + β2[c]·v)
//! ```
//!
//! with `P(z_c)` the source frequencies of the training set. Vanilla mode
//! fits `σ(β0 + β1·x)` on base features only.
//!
//! The objective is the mean negative log-likelihood plus
//! `λ/2 · (‖β1‖² + ‖β2‖²)`; the intercept is not penalized.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::featurize::{augment, FeatureSpace, FeatureVector};
use crate::optim::{minimize, LbfgsConfig, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Backdoor,
    Vanilla,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Backdoor => "backdoor",
            Mode::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backdoor" | "ba" => Ok(Mode::Backdoor),
            "vanilla" => Ok(Mode::Vanilla),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub v: f64,
    /// λ in `λ/2 · ‖w‖²`.
    pub l2_strength: f64,
    pub fit_intercept: bool,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub mode: Mode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            v: 10.0,
            l2_strength: 1.0,
            fit_intercept: true,
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
            mode: Mode::Backdoor,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength > 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::Config(format!("l2_strength must be > 0, got {}", self.l2_strength)));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("gradient_tolerance must be > 0".into()));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::Config(format!("v must be > 0, got {}", self.v)));
        }
        Ok(())
    }
}

/// Optimizer outcome recorded alongside a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub grad_inf_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub mode: Mode,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    /// Confounder coefficients, one per source; empty in vanilla mode.
    pub beta2: Vec<f64>,
    pub source_priors: Vec<f64>,
    pub space: FeatureSpace,
    pub config: ModelConfig,
    pub diagnostics: Option<FitDiagnostics>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Source frequencies `count(source = c) / N` over the training documents.
pub fn estimate_source_priors<'a, I>(train_docs: I, num_sources: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut counts = vec![0usize; num_sources];
    let mut n = 0usize;
    for doc in train_docs {
        let c = doc.source as usize;
        if c >= num_sources {
            return Err(Error::Domain {
                category: c,
                num_sources,
            });
        }
        counts[c] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config("cannot estimate source priors from an empty training set".into()));
    }
    Ok(counts.into_iter().map(|k| k as f64 / n as f64).collect())
}

/// Penalized mean logistic loss over `[β0, β1.., β2..]`.
pub struct LogisticLoss<'a> {
    rows: &'a [FeatureVector],
    labels: &'a [f64],
    base_dim: usize,
    block_dim: usize,
    lambda: f64,
    fit_intercept: bool,
}

impl<'a> LogisticLoss<'a> {
    /// All rows must share one base dimension and one block length.
    pub fn new(rows: &'a [FeatureVector], labels: &'a [f64], lambda: f64, fit_intercept: bool) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Config("no training rows".into()))?;
        if rows.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let base_dim = first.base_dim();
        let block_dim = first.confounder_block.as_ref().map_or(0, Vec::len);
        for r in rows {
            if r.base_dim() != base_dim || r.confounder_block.as_ref().map_or(0, Vec::len) != block_dim {
                return Err(Error::Config("training rows have inconsistent widths".into()));
            }
        }
        Ok(LogisticLoss {
            rows,
            labels,
            base_dim,
            block_dim,
            lambda,
            fit_intercept,
        })
    }

    fn logit(&self, row: &FeatureVector, x: &[f64]) -> f64 {
        let beta1 = &x[1..1 + self.base_dim];
        let mut z = x[0] + row.dot_base(beta1);
        if let Some(block) = &row.confounder_block {
            let beta2 = &x[1 + self.base_dim..];
            z += block.iter().zip(beta2).map(|(b, w)| b * w).sum::<f64>();
        }
        z
    }
}

impl Objective for LogisticLoss<'_> {
    fn dim(&self) -> usize {
        1 + self.base_dim + self.block_dim
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let n = self.rows.len() as f64;
        let mut loss = 0.0;
        for (row, &y) in self.rows.iter().zip(self.labels) {
            let z = self.logit(row, x);
            loss += softplus(z) - y * z;
            let r = (sigmoid(z) - y) / n;
            grad[0] += r;
            row.add_scaled_base(r, &mut grad[1..1 + self.base_dim]);
            if let Some(block) = &row.confounder_block {
                for (g, b) in grad[1 + self.base_dim..].iter_mut().zip(block) {
                    *g += r * b;
                }
            }
        }
        if !self.fit_intercept {
            grad[0] = 0.0;
        }
        let mut penalty = 0.0;
        for (g, w) in grad[1..].iter_mut().zip(&x[1..]) {
            penalty += w * w;
            *g += self.lambda * w;
        }
        loss / n + 0.5 * self.lambda * penalty
    }
}

/// Trains on documents, vectorizing them in `space`.
pub fn train(train_docs: &[&Document], space: &FeatureSpace, config: &ModelConfig) -> Result<TrainedModel> {
    let base: Vec<FeatureVector> = train_docs
        .iter()
        .map(|d| space.vectorize(d))
        .collect::<Result<_>>()?;
    let labels: Vec<u8> = train_docs.iter().map(|d| d.label).collect();
    let sources: Vec<u8> = train_docs.iter().map(|d| d.source).collect();
    train_vectors(&base, &labels, &sources, space, config)
}

/// Trains on pre-computed base vectors.
pub fn train_vectors(
    base: &[FeatureVector],
    labels: &[u8],
    sources: &[u8],
    space: &FeatureSpace,
    config: &ModelConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if base.len() != labels.len() || base.len() != sources.len() {
        return Err(Error::Config("features, labels and sources differ in length".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Config("training set needs at least one example of each label".into()));
    }

    let space = space.clone().with_v(config.v);
    let num_sources = space.num_sources;
    let mut counts = vec![0usize; num_sources];
    for &s in sources {
        let c = s as usize;
        if c >= num_sources {
            return Err(Error::Domain {
                category: c,
                num_sources,
            });
        }
        counts[c] += 1;
    }
    let source_priors: Vec<f64> = counts.iter().map(|&k| k as f64 / base.len() as f64).collect();

    let rows: Vec<FeatureVector> = match config.mode {
        Mode::Backdoor => base
            .iter()
            .zip(sources)
            .map(|(x, &s)| augment(x, s as usize, &space))
            .collect::<Result<_>>()?,
        Mode::Vanilla => base.to_vec(),
    };
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let loss = LogisticLoss::new(&rows, &y, config.l2_strength, config.fit_intercept)?;
    let opt = LbfgsConfig {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..Default::default()
    };
    let min = minimize(&loss, vec![0.0; loss.dim()], &opt)?;
    if !min.converged {
        log::warn!(
            "optimizer stopped after {} iterations with gradient norm {:.3e}",
            min.iterations,
            min.grad_inf_norm
        );
    }

    let d = loss.base_dim;
    Ok(TrainedModel {
        mode: config.mode,
        beta0: min.x[0],
        beta1: min.x[1..1 + d].to_vec(),
        beta2: min.x[1 + d..].to_vec(),
        source_priors,
        space,
        config: *config,
        diagnostics: Some(FitDiagnostics {
            iterations: min.iterations,
            objective: min.value,
            grad_inf_norm: min.grad_inf_norm,
            converged: min.converged,
        }),
    })
}

impl TrainedModel {
    /// Assembles a model from coefficients, checking shapes and priors.
    pub fn from_parts(
        mode: Mode,
        beta0: f64,
        beta1: Vec<f64>,
        beta2: Vec<f64>,
        source_priors: Vec<f64>,
        space: FeatureSpace,
        config: ModelConfig,
    ) -> Result<Self> {
        if beta1.len() != space.dim() {
            return Err(Error::Integrity(format!(
                "beta1 has {} entries, feature space has {}",
                beta1.len(),
                space.dim()
            )));
        }
        let expected_block = match mode {
            Mode::Backdoor => space.num_sources,
            Mode::Vanilla => 0,
        };
        if beta2.len() != expected_block {
            return Err(Error::Integrity(format!(
                "beta2 has {} entries, expected {expected_block}",
                beta2.len()
            )));
        }
        if source_priors.len() != space.num_sources
            || source_priors.iter().any(|&p| !(p >= 0.0))
            || (source_priors.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::Integrity(format!(
                "source priors {source_priors:?} are not a distribution over {} sources",
                space.num_sources
            )));
        }
        let space = space.with_v(config.v);
        Ok(TrainedModel {
            mode,
            beta0,
            beta1,
            beta2,
            source_priors,
            space,
            config: ModelConfig { mode, ..config },
            diagnostics: None,
        })
    }

    /// `β0 + β1·x`.
    pub fn text_logit(&self, base: &FeatureVector) -> f64 {
        self.beta0 + base.dot_base(&self.beta1)
    }

    /// `P(y=1 | x, z=c)` under the backdoor model.
    pub fn conditional(&self, base: &FeatureVector, category: usize) -> Result<f64> {
        self.require(Mode::Backdoor)?;
        let beta2 = self.beta2.get(category).ok_or(Error::Domain {
            category,
            num_sources: self.beta2.len(),
        })?;
        Ok(sigmoid(self.text_logit(base) + beta2 * self.space.v))
    }

    pub fn predict(&self, base: &FeatureVector) -> f64 {
        match self.mode {
            Mode::Backdoor => backdoor_sum(self, base),
            Mode::Vanilla => sigmoid(self.text_logit(base)),
        }
    }

    fn require(&self, mode: Mode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(Error::Mode {
                expected: mode.as_str(),
                actual: self.mode.as_str(),
            })
        }
    }
}

fn backdoor_sum(model: &TrainedModel, base: &FeatureVector) -> f64 {
    let text = model.text_logit(base);
    model
        .beta2
        .iter()
        .zip(&model.source_priors)
        .map(|(b, p)| p * sigmoid(text + b * model.space.v))
        .sum()
}

/// Backdoor-adjusted probability, marginalizing over every source.
pub fn predict_backdoor(model: &TrainedModel, base: &FeatureVector) -> Result<f64> {
    model.require(Mode::Backdoor)?;
    Ok(backdoor_sum(model, base))
}

/// `σ(β0 + β1·x)` for a vanilla model.
pub fn predict_vanilla(model: &TrainedModel, base: &FeatureVector) -> Result<f64> {
    model.require(Mode::Vanilla)?;
    Ok(sigmoid(model.text_logit(base)))
}

/// On-disk model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub mode: Mode,
    pub v: f64,
    pub lambda: f64,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub source_priors: Vec<f64>,
    pub feature_space_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    pub dim: usize,
}

impl From<&TrainedModel> for ModelFile {
    fn from(m: &TrainedModel) -> Self {
        ModelFile {
            mode: m.mode,
            v: m.config.v,
            lambda: m.config.l2_strength,
            beta0: m.beta0,
            beta1: m.beta1.clone(),
            beta2: m.beta2.clone(),
            source_priors: m.source_priors.clone(),
            feature_space_kind: m.space.kind().as_str().to_string(),
            vocabulary: m.space.vocabulary().map(<[String]>::to_vec),
            dim: m.space.dim(),
        }
    }
}

impl TryFrom<ModelFile> for TrainedModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let space = match f.feature_space_kind.as_str() {
            "unigram" => {
                let vocab = f
                    .vocabulary
                    .ok_or_else(|| Error::Integrity("unigram model without vocabulary".into()))?;
                FeatureSpace::unigram(vocab)?
            }
            "embedding" => FeatureSpace::embedding_detached(f.dim),
            other => return Err(Error::Integrity(format!("unknown feature space kind {other:?}"))),
        };
        if space.dim() != f.dim {
            return Err(Error::Integrity(format!(
                "dim {} disagrees with vocabulary size {}",
                f.dim,
                space.dim()
            )));
        }
        let space = space.with_num_sources(f.source_priors.len());
        let config = ModelConfig {
            v: f.v,
            l2_strength: f.lambda,
            mode: f.mode,
            ..Default::default()
        };
        TrainedModel::from_parts(f.mode, f.beta0, f.beta1, f.beta2, f.source_priors, space, config)
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &ModelFile::from(model))?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw: ModelFile = serde_json::from_reader(BufReader::new(file))?;
    TrainedModel::try_from(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_space(dim: usize) -> FeatureSpace {
        FeatureSpace::unigram((0..dim).map(|i| format!("t{i:02}"))).unwrap()
    }

    fn dense_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<FeatureVector> {
        (0..n)
            .map(|_| FeatureVector::dense((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn source_priors_by_counting() {
        let doc = |s: u8| Document {
            id: String::new(),
            text: String::new(),
            label: 0,
            source: s,
        };
        let docs = [doc(0), doc(0), doc(0), doc(1)];
        assert_eq!(estimate_source_priors(&docs, 2).unwrap(), [0.75, 0.25]);
        let docs = [doc(1), doc(1)];
        assert_eq!(estimate_source_priors(&docs, 2).unwrap(), [0.0, 1.0]);
        assert!(estimate_source_priors(std::iter::empty(), 2).is_err());
    }

    #[test]
    fn separable_toy_set_converges() {
        let rows = vec![
            FeatureVector::dense(vec![-2.0]),
            FeatureVector::dense(vec![-1.0]),
            FeatureVector::dense(vec![1.0]),
            FeatureVector::dense(vec![2.0]),
        ];
        let space = FeatureSpace::embedding_detached(1);
        let cfg = ModelConfig::default().with_mode(Mode::Vanilla);
        let m = train_vectors(&rows, &[0, 0, 1, 1], &[0, 0, 1, 1], &space, &cfg).unwrap();
        let diag = m.diagnostics.unwrap();
        assert!(diag.converged);
        assert!(diag.grad_inf_norm < 1e-8);
        assert!(m.beta1[0].is_finite() && m.beta1[0] > 0.0);
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        let rows: Vec<FeatureVector> = (0..20).map(|i| FeatureVector::dense(vec![(i % 2) as f64])).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let space = FeatureSpace::embedding_detached(1);
        let mut last = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0, 1e4] {
            let cfg = ModelConfig {
                l2_strength: lambda,
                mode: Mode::Vanilla,
                ..Default::default()
            };
            let m = train_vectors(&rows, &labels, &labels, &space, &cfg).unwrap();
            assert!(m.beta1[0].abs() < last);
            last = m.beta1[0].abs();
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = dense_rows(&mut rng, 30, 4);
        let labels: Vec<u8> = (0..30).map(|_| rng.gen_range(0..2)).collect();
        let sources: Vec<u8> = (0..30).map(|_| rng.gen_range(0..2)).collect();
        let space = FeatureSpace::embedding_detached(4);
        let cfg = ModelConfig::default();
        let a = train_vectors(&rows, &labels, &sources, &space, &cfg).unwrap();
        let b = train_vectors(&rows, &labels, &sources, &space, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.beta2.len(), 2);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows = dense_rows(&mut rng, 12, 5);
        let y: Vec<f64> = (0..12).map(|_| rng.gen_range(0..2) as f64).collect();
        let loss = LogisticLoss::new(&rows, &y, 0.3, true).unwrap();
        let h = 1e-5;
        for _ in 0..25 {
            let w: Vec<f64> = (0..loss.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut g = vec![0.0; loss.dim()];
            loss.value_grad(&w, &mut g);
            for j in 0..w.len() {
                let mut plus = w.clone();
                let mut minus = w.clone();
                plus[j] += h;
                minus[j] -= h;
                let fd = (loss.value(&plus) - loss.value(&minus)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-5, "coord {j}: fd {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn final_objective_not_above_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = dense_rows(&mut rng, 40, 3);
        let labels: Vec<u8> = (0..40).map(|_| rng.gen_range(0..2)).collect();
        let space = FeatureSpace::embedding_detached(3);
        let cfg = ModelConfig::default().with_mode(Mode::Vanilla);
        let m = train_vectors(&rows, &labels, &labels, &space, &cfg).unwrap();
        let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let loss = LogisticLoss::new(&rows, &y, cfg.l2_strength, true).unwrap();
        assert!(m.diagnostics.unwrap().objective <= loss.value(&vec![0.0; loss.dim()]));
    }

    #[test]
    fn backdoor_mixture_by_hand() {
        let space = toy_space(2);
        // v = 1 so the effective confounder logits are β2 itself.
        let cfg = ModelConfig {
            v: 1.0,
            ..Default::default()
        };
        let m = TrainedModel::from_parts(
            Mode::Backdoor,
            0.0,
            vec![0.0, 0.0],
            vec![3f64.ln(), 0.0],
            vec![0.5, 0.5],
            space,
            cfg,
        )
        .unwrap();
        let x = FeatureVector::binary(2, vec![0]);
        let p = predict_backdoor(&m, &x).unwrap();
        assert!((p - 0.625).abs() < 1e-12);
        assert!(matches!(predict_vanilla(&m, &x), Err(Error::Mode { .. })));
    }

    #[test]
    fn degenerate_priors_collapse_to_conditional() {
        let space = toy_space(2);
        let m = TrainedModel::from_parts(
            Mode::Backdoor,
            0.3,
            vec![0.7, -1.1],
            vec![0.2, -0.4],
            vec![1.0, 0.0],
            space,
            ModelConfig::default(),
        )
        .unwrap();
        let x = FeatureVector::binary(2, vec![0, 1]);
        let expected = sigmoid(0.3 + 0.7 - 1.1 + 0.2 * 10.0);
        assert!((predict_backdoor(&m, &x).unwrap() - expected).abs() < 1e-15);
        assert!((m.conditional(&x, 0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_confounder_weights_match_vanilla_form() {
        let space = toy_space(3);
        let m = TrainedModel::from_parts(
            Mode::Backdoor,
            -0.5,
            vec![1.0, 2.0, -3.0],
            vec![0.0, 0.0],
            vec![0.3, 0.7],
            space,
            ModelConfig::default(),
        )
        .unwrap();
        let x = FeatureVector::binary(3, vec![0, 2]);
        let vanilla_form = sigmoid(-0.5 + 1.0 - 3.0);
        assert!((predict_backdoor(&m, &x).unwrap() - vanilla_form).abs() < 1e-15);
    }

    #[test]
    fn vanilla_prediction_cases() {
        let space = toy_space(2);
        let cfg = ModelConfig::default();
        let zero = TrainedModel::from_parts(Mode::Vanilla, 0.0, vec![0.0; 2], vec![], vec![0.5, 0.5], space.clone(), cfg)
            .unwrap();
        for active in [vec![], vec![0], vec![0, 1]] {
            assert_eq!(predict_vanilla(&zero, &FeatureVector::binary(2, active)).unwrap(), 0.5);
        }
        let nine = TrainedModel::from_parts(Mode::Vanilla, 9f64.ln(), vec![0.0; 2], vec![], vec![0.5, 0.5], space.clone(), cfg)
            .unwrap();
        let p = predict_vanilla(&nine, &FeatureVector::binary(2, vec![])).unwrap();
        assert!((p - 0.9).abs() < 1e-12);
        assert!(matches!(predict_backdoor(&nine, &FeatureVector::binary(2, vec![])), Err(Error::Mode { .. })));

        let pos = TrainedModel::from_parts(Mode::Vanilla, 0.0, vec![0.8, 0.0], vec![], vec![0.5, 0.5], space, cfg).unwrap();
        let lo = predict_vanilla(&pos, &FeatureVector::dense(vec![0.0, 0.0])).unwrap();
        let hi = predict_vanilla(&pos, &FeatureVector::dense(vec![0.5, 0.0])).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn confounder_effect_grows_with_v() {
        // Label depends only on source; text is noise.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 400;
        let sources: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let labels: Vec<u8> = sources
            .iter()
            .map(|&s| rng.gen_bool(if s == 0 { 0.7 } else { 0.2 }) as u8)
            .collect();
        let rows: Vec<FeatureVector> = (0..n)
            .map(|_| FeatureVector::binary(20, (0..20).filter(|_| rng.gen_bool(0.2)).collect()))
            .collect();
        let space = toy_space(20);
        let mut last = 0.0;
        for v in [1.0, 10.0, 100.0] {
            let cfg = ModelConfig {
                v,
                ..Default::default()
            };
            let m = train_vectors(&rows, &labels, &sources, &space, &cfg).unwrap();
            let effect = m.beta2.iter().map(|b| (b * v).powi(2)).sum::<f64>().sqrt();
            assert!(effect >= last, "v={v}: {effect} < {last}");
            last = effect;
        }
    }

    #[test]
    fn rejects_single_class_training() {
        let rows = vec![FeatureVector::dense(vec![1.0]); 3];
        let space = FeatureSpace::embedding_detached(1);
        let err = train_vectors(&rows, &[1, 1, 1], &[0, 1, 0], &space, &ModelConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn model_file_round_trip() {
        let docs: Vec<Document> = [("a", "drug use", 1, 0), ("b", "denies", 0, 1), ("c", "drug", 1, 1), ("d", "no", 0, 0)]
            .iter()
            .map(|&(id, text, label, source)| Document {
                id: id.into(),
                text: text.into(),
                label,
                source,
            })
            .collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let space = crate::featurize::build_vocab(refs.iter().copied()).unwrap();
        let m = train(&refs, &space, &ModelConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.beta1, m.beta1);
        assert_eq!(back.beta2, m.beta2);
        assert_eq!(back.space.vocabulary(), m.space.vocabulary());
        let x = m.space.vectorize(&docs[0]).unwrap();
        assert_eq!(back.predict(&x), m.predict(&x));

        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["mode", "v", "lambda", "beta0", "beta1", "beta2", "source_priors", "feature_space_kind", "vocabulary", "dim"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
