//! Comment sentiment: bag-of-words TF-IDF features and logistic regression,
//! plus the edge-cost potentials that feed its probabilities into an MRF.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, SignedNetwork};
use crate::psl::HlMrf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SentimentError {
    #[error("training data needs both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("sign probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("logistic regression diverged")]
    NonFinite,
}

/// Lowercased alphanumeric runs of length two or more.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyFields")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_frequency: Vec<u32>,
    document_count: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
struct VocabularyFields {
    tokens: Vec<String>,
    doc_frequency: Vec<u32>,
    document_count: usize,
}

impl From<VocabularyFields> for Vocabulary {
    fn from(f: VocabularyFields) -> Self {
        let mut v = Vocabulary {
            tokens: f.tokens,
            doc_frequency: f.doc_frequency,
            document_count: f.document_count,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }
}

impl Vocabulary {
    /// Tokens occurring in at least `min_df` of `docs`, in sorted order.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(docs: I, min_df: u32) -> Self {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut n = 0;
        for doc in docs {
            n += 1;
            let mut toks = tokenize(doc);
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let (tokens, doc_frequency): (Vec<_>, Vec<_>) =
            df.into_iter().filter(|(_, c)| *c >= min_df.max(1)).unzip();
        let mut v = Vocabulary {
            tokens,
            doc_frequency,
            document_count: n,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn column(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, column: u32) -> &str {
        &self.tokens[column as usize]
    }

    pub fn doc_frequency(&self, column: u32) -> u32 {
        self.doc_frequency[column as usize]
    }

    /// `ln(N / df)`.
    pub fn idf(&self, token: &str) -> Result<f64, SentimentError> {
        let c = self
            .column(token)
            .ok_or_else(|| SentimentError::UnknownToken(token.to_string()))?;
        Ok(self.idf_at(c))
    }

    fn idf_at(&self, column: u32) -> f64 {
        (self.document_count as f64 / self.doc_frequency[column as usize] as f64).ln()
    }

    /// Raw term count times idf, unknown tokens skipped.
    pub fn featurize(&self, text: &str) -> FeatureVector {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokenize(text) {
            if let Some(c) = self.column(&t) {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        FeatureVector {
            entries: counts
                .into_iter()
                .map(|(c, n)| (c, n as f64 * self.idf_at(c)))
                .collect(),
        }
    }
}

/// Sparse `(column, weight)` pairs in increasing column order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn dot(&self, theta: &[f64]) -> f64 {
        self.entries.iter().map(|&(c, v)| theta[c as usize] * v).sum()
    }

    pub fn scaled(&self, k: f64) -> FeatureVector {
        FeatureVector {
            entries: self.entries.iter().map(|&(c, v)| (c, v * k)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            epochs: 500,
            learning_rate: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub theta: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl LogRegModel {
    pub fn zeros(dim: usize) -> Self {
        LogRegModel {
            theta: vec![0.0; dim],
            bias: 0.0,
            threshold: 0.5,
        }
    }

    pub fn predict_prob(&self, x: &FeatureVector) -> f64 {
        sigmoid(x.dot(&self.theta) + self.bias)
    }

    pub fn predict_label(&self, x: &FeatureVector) -> bool {
        self.predict_prob(x) >= self.threshold
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Summed cross-entropy plus `(l2 / 2)·‖θ‖²`; the bias is not penalized.
pub fn logreg_loss(model: &LogRegModel, xs: &[FeatureVector], ys: &[bool], l2: f64) -> f64 {
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = x.dot(&model.theta) + model.bias;
            softplus(z) - if y { z } else { 0.0 }
        })
        .sum();
    data + 0.5 * l2 * model.theta.iter().map(|t| t * t).sum::<f64>()
}

/// Gradient of [`logreg_loss`]: `(∂/∂θ, ∂/∂bias)`.
pub fn logreg_gradient(
    model: &LogRegModel,
    xs: &[FeatureVector],
    ys: &[bool],
    l2: f64,
) -> (Vec<f64>, f64) {
    let mut g: Vec<f64> = model.theta.iter().map(|t| l2 * t).collect();
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let r = model.predict_prob(x) - if y { 1.0 } else { 0.0 };
        gb += r;
        for &(c, v) in &x.entries {
            g[c as usize] += r * v;
        }
    }
    (g, gb)
}

/// Full-batch gradient descent. When a step would raise the loss the step
/// size is halved until it does not, and the smaller size is kept.
/// Returns the model and the loss after each epoch.
pub fn train_logreg(
    xs: &[FeatureVector],
    ys: &[bool],
    dim: usize,
    cfg: &LogRegConfig,
) -> Result<(LogRegModel, Vec<f64>), SentimentError> {
    if xs.len() != ys.len() {
        return Err(SentimentError::LengthMismatch {
            features: xs.len(),
            labels: ys.len(),
        });
    }
    let positives = ys.iter().filter(|&&y| y).count();
    let negatives = ys.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SentimentError::SingleClass {
            positives,
            negatives,
        });
    }
    let mut model = LogRegModel::zeros(dim);
    let mut loss = logreg_loss(&model, xs, ys, cfg.l2);
    let mut lr = cfg.learning_rate;
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (g, gb) = logreg_gradient(&model, xs, ys, cfg.l2);
        let mut accepted = false;
        for _ in 0..60 {
            let trial = LogRegModel {
                theta: model.theta.iter().zip(&g).map(|(t, d)| t - lr * d).collect(),
                bias: model.bias - lr * gb,
                threshold: model.threshold,
            };
            let l = logreg_loss(&trial, xs, ys, cfg.l2);
            if l.is_finite() && l <= loss {
                model = trial;
                loss = l;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !loss.is_finite() {
            return Err(SentimentError::NonFinite);
        }
        history.push(loss);
        if !accepted {
            break;
        }
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentConfig {
    pub min_df: u32,
    pub logreg: LogRegConfig,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            min_df: 2,
            logreg: LogRegConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentModel {
    pub vocabulary: Vocabulary,
    pub logreg: LogRegModel,
}

impl SentimentModel {
    /// Trains on the comments of every edge in `net`, labelled by sign.
    /// Edges without a comment are skipped.
    pub fn train(net: &SignedNetwork, cfg: &SentimentConfig) -> Result<Self, SentimentError> {
        let docs: Vec<(&str, bool)> = net
            .signed_pairs()
            .filter_map(|(s, t, sign)| {
                net.comment(s, t)
                    .filter(|c| !c.trim().is_empty())
                    .map(|c| (c, sign.is_positive()))
            })
            .collect();
        let vocabulary = Vocabulary::build(docs.iter().map(|d| d.0), cfg.min_df);
        let xs: Vec<FeatureVector> = docs.iter().map(|d| vocabulary.featurize(d.0)).collect();
        let ys: Vec<bool> = docs.iter().map(|d| d.1).collect();
        let (logreg, _) = train_logreg(&xs, &ys, vocabulary.len(), &cfg.logreg)?;
        Ok(SentimentModel { vocabulary, logreg })
    }

    /// Probability of a positive sign; 0.5 for missing or blank comments.
    pub fn prob(&self, comment: Option<&str>) -> f64 {
        match comment {
            Some(c) if !c.trim().is_empty() => {
                self.logreg.predict_prob(&self.vocabulary.featurize(c))
            }
            _ => 0.5,
        }
    }

    pub fn score_pairs(&self, net: &SignedNetwork, pairs: &[(NodeId, NodeId)]) -> Vec<f64> {
        pairs.iter().map(|&(a, b)| self.prob(net.comment(a, b))).collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Writes `src_id,tgt_id,prob` rows.
pub fn write_probs_csv<W: Write>(
    mut w: W,
    rows: &[((NodeId, NodeId), f64)],
) -> std::io::Result<()> {
    writeln!(w, "src_id,tgt_id,prob")?;
    for &((a, b), p) in rows {
        writeln!(w, "{},{},{}", a.0, b.0, p)?;
    }
    Ok(())
}

/// Edge-cost coefficients of the fused objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub lambda_1: f64,
    pub lambda_0: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            lambda_1: 1.0,
            lambda_0: 1.0,
        }
    }
}

/// Adds `λ₁(1 − p)x + λ₀·p(1 − x)` for each `(pair, p)` whose `Upvote` atom
/// is free in `mrf`, with `λ₁`, `λ₀` read from `pos_slot`, `neg_slot`.
/// Returns the number of edges that received a cost.
pub fn fuse_priors(
    mrf: &mut HlMrf,
    costs: &[((NodeId, NodeId), f64)],
    pos_slot: u32,
    neg_slot: u32,
) -> Result<usize, SentimentError> {
    if let Some(&(_, p)) = costs.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
        return Err(SentimentError::ProbabilityOutOfRange(p));
    }
    Ok(mrf.add_edge_costs(costs, pos_slot, neg_slot))
}
