//! Ranking metrics, stratified folds and the cross-validation harness.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, SignedNetwork};
use crate::latent::{em_fit, LatentConfig};
use crate::psl::internal_split;
use crate::sentiment::{SentimentConfig, SentimentModel};
use crate::triadic::{TriadicConfig, TriadicModel};
use crate::Error;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("metric needs both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("no edges of the relevant class")]
    NoRelevant,
    #[error("every edge belongs to the relevant class; the PR area is trivially 1")]
    AllRelevant,
    #[error("empty score list")]
    Empty,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{edges} edges cannot fill {folds} folds")]
    TooFewEdges { edges: usize, folds: usize },
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("{scores} scores for {pairs} test pairs")]
    ScoreCount { scores: usize, pairs: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub pair: (NodeId, NodeId),
    pub score: f64,
    pub truth: bool,
}

impl ScoredEdge {
    pub fn new(score: f64, truth: bool) -> Self {
        ScoredEdge {
            pair: (NodeId(0), NodeId(0)),
            score,
            truth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelevantClass {
    Positive,
    Negative,
}

/// Precision and recall of "positive iff score ≥ threshold". Precision is 1
/// when nothing is predicted positive, recall is 1 when nothing is positive.
pub fn precision_recall(scored: &[ScoredEdge], threshold: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for e in scored {
        match (e.score >= threshold, e.truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 };
    (p, r)
}

/// Groups of equal score in ranking order with `(relevant, other)` counts.
fn ranked_groups(scored: &[ScoredEdge], class: RelevantClass) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..scored.len()).collect();
    match class {
        RelevantClass::Positive => idx.sort_by(|&a, &b| scored[b].score.total_cmp(&scored[a].score)),
        RelevantClass::Negative => idx.sort_by(|&a, &b| scored[a].score.total_cmp(&scored[b].score)),
    }
    let relevant = |e: &ScoredEdge| e.truth == (class == RelevantClass::Positive);
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in idx {
        let e = &scored[i];
        if last != Some(e.score) {
            groups.push((0, 0));
            last = Some(e.score);
        }
        let g = groups.last_mut().expect("group pushed");
        if relevant(e) {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

fn class_counts(scored: &[ScoredEdge]) -> (usize, usize) {
    let p = scored.iter().filter(|e| e.truth).count();
    (p, scored.len() - p)
}

/// Mann–Whitney AUC; tied positive/negative pairs count one half.
pub fn auc_roc(scored: &[ScoredEdge]) -> Result<f64, EvalError> {
    let (p, n) = class_counts(scored);
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass {
            positives: p,
            negatives: n,
        });
    }
    // ascending groups: negatives seen so far sit strictly below
    let mut groups = ranked_groups(scored, RelevantClass::Positive);
    groups.reverse();
    let mut below = 0usize;
    let mut wins2 = 0usize;
    for (pos, neg) in groups {
        wins2 += 2 * pos * below + pos * neg;
        below += neg;
    }
    Ok(wins2 as f64 / (2 * p * n) as f64)
}

/// Step-wise area under the precision–recall curve (average precision) with
/// tied scores treated as one threshold. For the negative class the ranking
/// is by `1 − score`.
pub fn auc_pr(scored: &[ScoredEdge], class: RelevantClass) -> Result<f64, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    let groups = ranked_groups(scored, class);
    let relevant: usize = groups.iter().map(|g| g.0).sum();
    if relevant == 0 {
        return Err(EvalError::NoRelevant);
    }
    if relevant == scored.len() {
        return Err(EvalError::AllRelevant);
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut area = 0.0;
    for (rel, other) in groups {
        tp += rel;
        seen += rel + other;
        if rel > 0 {
            area += rel as f64 * tp as f64 / seen as f64;
        }
    }
    Ok(area / relevant as f64)
}

/// `(fpr, tpr)` points from the origin through every threshold.
pub fn roc_curve(scored: &[ScoredEdge]) -> Vec<(f64, f64)> {
    let (p, n) = class_counts(scored);
    let mut out = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (pos, neg) in ranked_groups(scored, RelevantClass::Positive) {
        tp += pos;
        fp += neg;
        out.push((ratio(fp, n), ratio(tp, p)));
    }
    out
}

/// `(recall, precision)` at every threshold.
pub fn pr_curve(scored: &[ScoredEdge], class: RelevantClass) -> Vec<(f64, f64)> {
    let groups = ranked_groups(scored, class);
    let relevant: usize = groups.iter().map(|g| g.0).sum();
    let (mut tp, mut seen) = (0usize, 0usize);
    groups
        .into_iter()
        .map(|(rel, other)| {
            tp += rel;
            seen += rel + other;
            (ratio(tp, relevant), tp as f64 / seen as f64)
        })
        .collect()
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Assignment of test-eligible edges to folds. In hold-out mode there is a
/// single test fold (0) and training edges carry the index `n_folds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub pairs: Vec<(NodeId, NodeId)>,
    pub assignments: Vec<usize>,
    pub evidence_ratio: f64,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_pairs(&self, fold: usize) -> Vec<(NodeId, NodeId)> {
        self.pairs
            .iter()
            .zip(&self.assignments)
            .filter(|(_, &a)| a == fold)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &a in &self.assignments {
            if a < self.n_folds {
                sizes[a] += 1;
            }
        }
        sizes
    }
}

type Pairs = Vec<(NodeId, NodeId)>;

/// Shuffled `(negatives, positives)`.
fn split_by_sign(net: &SignedNetwork, rng: &mut ChaCha8Rng) -> (Pairs, Pairs) {
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (s, t, sign) in net.signed_pairs() {
        if sign.is_positive() {
            pos.push((s, t));
        } else {
            neg.push((s, t));
        }
    }
    neg.shuffle(rng);
    pos.shuffle(rng);
    (neg, pos)
}

/// Seeded stratified folds: negatives are dealt round-robin first, then
/// positives continue from the next fold, so fold sizes and per-fold
/// negative counts each differ by at most one.
pub fn make_folds(net: &SignedNetwork, n_folds: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if n_folds < 2 {
        return Err(EvalError::TooFewFolds(n_folds));
    }
    if net.edge_count() < n_folds {
        return Err(EvalError::TooFewEdges {
            edges: net.edge_count(),
            folds: n_folds,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (neg, pos) = split_by_sign(net, &mut rng);
    let mut pairs = Vec::with_capacity(net.edge_count());
    let mut assignments = Vec::with_capacity(net.edge_count());
    for (i, p) in neg.into_iter().chain(pos).enumerate() {
        pairs.push(p);
        assignments.push(i % n_folds);
    }
    Ok(FoldPlan {
        n_folds,
        pairs,
        assignments,
        evidence_ratio: (n_folds - 1) as f64,
        seed,
    })
}

/// Single stratified hold-out split keeping `train_fraction` of each sign
/// for training.
pub fn holdout_plan(net: &SignedNetwork, train_fraction: f64, seed: u64) -> Result<FoldPlan, EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::BadFraction(train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (neg, pos) = split_by_sign(net, &mut rng);
    let mut pairs = Vec::new();
    let mut assignments = Vec::new();
    let mut test = 0usize;
    for group in [neg, pos] {
        let n_test = ((1.0 - train_fraction) * group.len() as f64).round() as usize;
        for (i, p) in group.into_iter().enumerate() {
            pairs.push(p);
            let is_test = i < n_test;
            test += is_test as usize;
            assignments.push(if is_test { 0 } else { 1 });
        }
    }
    if test == 0 || test == pairs.len() {
        return Err(EvalError::TooFewEdges {
            edges: pairs.len(),
            folds: 2,
        });
    }
    Ok(FoldPlan {
        n_folds: 1,
        evidence_ratio: (pairs.len() - test) as f64 / test as f64,
        pairs,
        assignments,
        seed,
    })
}

/// Anything that can be trained on some edges and score others.
pub trait SignModel: Sync {
    fn name(&self) -> String;

    /// Trains on `train` and returns one score in `[0, 1]` per `test` pair.
    /// `full` is the whole network; models must not read the signs of the
    /// `test` pairs from it, only structure and comments.
    fn fit_predict(
        &self,
        train: &SignedNetwork,
        full: &SignedNetwork,
        test: &[(NodeId, NodeId)],
    ) -> Result<Vec<f64>, Error>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Triadic(TriadicConfig),
    Latent(LatentConfig),
    Sentiment(SentimentConfig),
    Fused {
        triadic: TriadicConfig,
        sentiment: SentimentConfig,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Triadic(_) => "triadic",
            ModelSpec::Latent(_) => "latent",
            ModelSpec::Sentiment(_) => "sentiment",
            ModelSpec::Fused { .. } => "fused",
        }
    }
}

impl SignModel for ModelSpec {
    fn name(&self) -> String {
        self.kind().to_string()
    }

    fn fit_predict(
        &self,
        train: &SignedNetwork,
        full: &SignedNetwork,
        test: &[(NodeId, NodeId)],
    ) -> Result<Vec<f64>, Error> {
        // test pairs stay free, so their signs in `observed` are never read
        let observed = crate::triadic::with_pairs(train, test)?;
        match self {
            ModelSpec::Triadic(cfg) => {
                let (model, _) = TriadicModel::fit(train, cfg)?;
                model.predict(&observed, test, None)
            }
            ModelSpec::Latent(cfg) => {
                let (model, _) = em_fit(train, cfg)?;
                model.predict(&observed, test)
            }
            ModelSpec::Sentiment(cfg) => {
                let model = SentimentModel::train(train, cfg)?;
                Ok(model.score_pairs(full, test))
            }
            ModelSpec::Fused { triadic, sentiment } => {
                let cfg = TriadicConfig {
                    fusion: Some(triadic.fusion.clone().unwrap_or_default()),
                    ..triadic.clone()
                };
                let targets = internal_split(train, cfg.target_fraction, cfg.seed);
                let evidence = train.without_pairs(&targets);
                let inner = SentimentModel::train(&evidence, sentiment)?;
                let inner_priors = inner.score_pairs(train, &targets);
                let mut model = TriadicModel::untrained(&cfg);
                model.learn(train, &targets, Some(&inner_priors), &cfg.learn)?;
                let outer = SentimentModel::train(train, sentiment)?;
                let priors = outer.score_pairs(full, test);
                model.predict(&observed, test, Some(&priors))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc_roc: f64,
    pub auc_pos_pr: f64,
    pub auc_neg_pr: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["auc_roc", "auc_pos_pr", "auc_neg_pr", "precision", "recall"];

    pub fn compute(scored: &[ScoredEdge], threshold: f64) -> Result<Metrics, EvalError> {
        let (precision, recall) = precision_recall(scored, threshold);
        Ok(Metrics {
            auc_roc: auc_roc(scored)?,
            auc_pos_pr: auc_pr(scored, RelevantClass::Positive)?,
            auc_neg_pr: auc_pr(scored, RelevantClass::Negative)?,
            precision,
            recall,
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.auc_roc, self.auc_pos_pr, self.auc_neg_pr, self.precision, self.recall]
    }

    fn from_values(v: [f64; 5]) -> Metrics {
        Metrics {
            auc_roc: v[0],
            auc_pos_pr: v[1],
            auc_neg_pr: v[2],
            precision: v[3],
            recall: v[4],
        }
    }

    /// Unweighted mean.
    pub fn mean(all: &[Metrics]) -> Option<Metrics> {
        if all.is_empty() {
            return None;
        }
        let mut acc = [0.0; 5];
        for m in all {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        Some(Metrics::from_values(acc.map(|a| a / all.len() as f64)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub positives: usize,
    pub negatives: usize,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
    pub seconds: f64,
    #[serde(skip)]
    pub scored: Vec<ScoredEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub n_folds: usize,
    pub evidence_ratio: f64,
    pub threshold: f64,
    pub folds: Vec<FoldResult>,
    pub mean: Option<Metrics>,
    pub complete: bool,
}

impl EvalReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Flat `model,fold,metric,value` rows, per fold then `mean`. Contains no
    /// timings so identical runs give identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "model,fold,metric,value")?;
        }
        for f in &self.folds {
            match &f.metrics {
                Some(m) => {
                    for (name, v) in Metrics::NAMES.iter().zip(m.values()) {
                        writeln!(w, "{},{},{},{}", self.model, f.fold, name, v)?;
                    }
                }
                None => writeln!(w, "{},{},error,NaN", self.model, f.fold)?,
            }
        }
        if let Some(m) = &self.mean {
            for (name, v) in Metrics::NAMES.iter().zip(m.values()) {
                writeln!(w, "{},mean,{},{}", self.model, name, v)?;
            }
        }
        Ok(())
    }

    /// ROC points `fold,fpr,tpr` for every fold.
    pub fn write_roc_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "fold,fpr,tpr")?;
        for f in &self.folds {
            for (x, y) in roc_curve(&f.scored) {
                writeln!(w, "{},{},{}", f.fold, x, y)?;
            }
        }
        Ok(())
    }

    /// PR points `fold,recall,precision` for the given class.
    pub fn write_pr_csv<W: Write>(&self, mut w: W, class: RelevantClass) -> std::io::Result<()> {
        writeln!(w, "fold,recall,precision")?;
        for f in &self.folds {
            for (x, y) in pr_curve(&f.scored, class) {
                writeln!(w, "{},{},{}", f.fold, x, y)?;
            }
        }
        Ok(())
    }
}

fn run_fold(
    model: &dyn SignModel,
    net: &SignedNetwork,
    plan: &FoldPlan,
    fold: usize,
    threshold: f64,
) -> FoldResult {
    let start = Instant::now();
    let test = plan.test_pairs(fold);
    let train = net.without_pairs(&test);
    let mut res = FoldResult {
        fold,
        n_train: train.edge_count(),
        n_test: test.len(),
        positives: test.iter().filter(|&&(a, b)| net.sign(a, b).is_some_and(|s| s.is_positive())).count(),
        negatives: 0,
        metrics: None,
        error: None,
        seconds: 0.0,
        scored: Vec::new(),
    };
    res.negatives = res.n_test - res.positives;
    let outcome = model.fit_predict(&train, net, &test).and_then(|scores| {
        if scores.len() != test.len() {
            return Err(EvalError::ScoreCount {
                scores: scores.len(),
                pairs: test.len(),
            }
            .into());
        }
        let scored: Vec<ScoredEdge> = test
            .iter()
            .zip(scores)
            .map(|(&pair, score)| ScoredEdge {
                pair,
                score: score.clamp(0.0, 1.0),
                truth: net.sign(pair.0, pair.1).is_some_and(|s| s.is_positive()),
            })
            .collect();
        let m = Metrics::compute(&scored, threshold)?;
        Ok((scored, m))
    });
    match outcome {
        Ok((scored, m)) => {
            res.scored = scored;
            res.metrics = Some(m);
        }
        Err(e) => {
            log::error!("{} fold {fold} failed: {e}", model.name());
            res.error = Some(e.to_string());
        }
    }
    res.seconds = start.elapsed().as_secs_f64();
    res
}

/// Trains and scores every fold of `plan`; failed folds are recorded and the
/// mean covers the successful ones. Up to `jobs` folds run at once.
pub fn cross_validate(
    model: &dyn SignModel,
    net: &SignedNetwork,
    plan: &FoldPlan,
    threshold: f64,
    jobs: usize,
) -> EvalReport {
    let folds: Vec<usize> = (0..plan.n_folds).collect();
    let results: Vec<FoldResult> = if jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| {
                folds
                    .par_iter()
                    .map(|&k| run_fold(model, net, plan, k, threshold))
                    .collect()
            }),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running folds sequentially");
                folds.iter().map(|&k| run_fold(model, net, plan, k, threshold)).collect()
            }
        }
    } else {
        folds.iter().map(|&k| run_fold(model, net, plan, k, threshold)).collect()
    };
    let ok: Vec<Metrics> = results.iter().filter_map(|f| f.metrics).collect();
    EvalReport {
        model: model.name(),
        seed: plan.seed,
        n_folds: plan.n_folds,
        evidence_ratio: plan.evidence_ratio,
        threshold,
        complete: ok.len() == results.len(),
        mean: Metrics::mean(&ok),
        folds: results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(scores: &[f64], truths: &[u8]) -> Vec<ScoredEdge> {
        scores.iter().zip(truths).map(|(&x, &t)| ScoredEdge::new(x, t == 1)).collect()
    }

    #[test]
    fn roc_examples() {
        assert_eq!(auc_roc(&s(&[0.9, 0.8, 0.1], &[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(auc_roc(&s(&[0.3, 0.3, 0.3], &[1, 0, 1])).unwrap(), 0.5);
        assert_eq!(auc_roc(&s(&[0.9, 0.6, 0.4], &[1, 0, 1])).unwrap(), 0.5);
        assert!(matches!(
            auc_roc(&s(&[0.1, 0.2], &[1, 1])),
            Err(EvalError::SingleClass { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn pr_examples() {
        assert_eq!(auc_pr(&s(&[0.9, 0.8, 0.1], &[1, 1, 0]), RelevantClass::Positive).unwrap(), 1.0);
        let ap = auc_pr(&s(&[0.9, 0.6, 0.4], &[1, 0, 1]), RelevantClass::Positive).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(
            auc_pr(&s(&[0.9, 0.8], &[1, 1]), RelevantClass::Positive),
            Err(EvalError::AllRelevant)
        );
        assert_eq!(
            auc_pr(&s(&[0.9, 0.8], &[1, 1]), RelevantClass::Negative),
            Err(EvalError::NoRelevant)
        );
    }

    #[test]
    fn precision_conventions() {
        let (p, r) = precision_recall(&s(&[0.9, 0.8, 0.7, 0.6, 0.1], &[1, 1, 1, 0, 1]), 0.5);
        assert_eq!(p, 0.75);
        assert_eq!(r, 0.75);
        let (p, r) = precision_recall(&s(&[0.1, 0.2], &[1, 0]), 0.5);
        assert_eq!((p, r), (1.0, 0.0));
    }
}
