//! Balance-theory triad rules and the model built on them.

use std::ops::Not;

use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, Sign, SignedNetwork, TriadTemplate};
use crate::psl::{
    internal_split, learn_weights, map_inference, Exponent, Grounder, HlMrf, LatentAtoms,
    LearnConfig, LearnReport, Literal, Predicate, Rule, SolverConfig,
};
use crate::sentiment::{fuse_priors, FusionConfig};
use crate::Error;

const SIGNS: [Sign; 2] = [Sign::Positive, Sign::Negative];

fn edge_literal(sign: Sign, a: &str, b: &str) -> Literal {
    let p = match sign {
        Sign::Positive => Predicate::Upvote,
        Sign::Negative => Predicate::Downvote,
    };
    Literal::new(p, &[a, b])
}

/// Sign carried by an edge literal: `Upvote` is positive, `Downvote`
/// negative, and negation flips it.
pub fn literal_sign(l: &Literal) -> Option<Sign> {
    let base = match l.predicate {
        Predicate::Upvote => Sign::Positive,
        Predicate::Downvote => Sign::Negative,
        _ => return None,
    };
    Some(match (base, l.negated) {
        (s, false) => s,
        (Sign::Positive, true) => Sign::Negative,
        (Sign::Negative, true) => Sign::Positive,
    })
}

/// The sixteen rules: every directed two-edge template around a middle node
/// `B` with target `(A, C)`, times the four sign pairs, each concluding the
/// sign product.
pub fn triadic_rules(default_weight: f64, exponent: Exponent) -> Vec<Rule> {
    let mut rules = Vec::with_capacity(16);
    for template in TriadTemplate::ALL {
        let [(s1, t1), (s2, t2)] = match template {
            TriadTemplate::ForwardPath => [("A", "B"), ("B", "C")],
            TriadTemplate::BackwardPath => [("B", "A"), ("C", "B")],
            TriadTemplate::CommonTarget => [("A", "B"), ("C", "B")],
            TriadTemplate::CommonSource => [("B", "A"), ("B", "C")],
        };
        for x in SIGNS {
            for y in SIGNS {
                let head = if x == y { Sign::Positive } else { Sign::Negative };
                let id = format!(
                    "{}_{}{}",
                    template.short_name(),
                    sign_char(x),
                    sign_char(y)
                );
                rules.push(Rule::new(
                    &id,
                    default_weight,
                    vec![edge_literal(x, s1, t1), edge_literal(y, s2, t2)],
                    edge_literal(head, "A", "C"),
                    exponent,
                ));
            }
        }
    }
    rules
}

fn sign_char(s: Sign) -> char {
    match s {
        Sign::Positive => 'p',
        Sign::Negative => 'n',
    }
}

/// Fixed-weight rules tying `Upvote(A,B)` and `Downvote(A,B)` together: they
/// may not both be true, and one of them must be.
pub fn coupling_rules(weight: f64) -> Vec<Rule> {
    let up = Literal::new(Predicate::Upvote, &["A", "B"]);
    let down = Literal::new(Predicate::Downvote, &["A", "B"]);
    vec![
        Rule::new("exclusive", weight, vec![up.clone()], down.clone().not(), Exponent::Squared),
        Rule::new("exhaustive", weight, vec![up.not()], down, Exponent::Squared),
    ]
}

/// Learnable negative priors on both edge predicates.
pub fn edge_prior_rules(weight: f64) -> Vec<Rule> {
    vec![
        Rule::new(
            "prior_up",
            weight,
            vec![],
            Literal::new(Predicate::Upvote, &["A", "B"]).not(),
            Exponent::Squared,
        ),
        Rule::new(
            "prior_down",
            weight,
            vec![],
            Literal::new(Predicate::Downvote, &["A", "B"]).not(),
            Exponent::Squared,
        ),
    ]
}

/// Hard decision from the two edge atoms; ties go to the majority class.
pub fn hard_label(up: f64, down: f64) -> Sign {
    if up >= down {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriadicConfig {
    pub rule_weight: f64,
    pub exponent: Exponent,
    pub coupling_weight: f64,
    pub prior_weight: f64,
    pub learn: LearnConfig,
    /// Share of training edges hidden during learning.
    pub target_fraction: f64,
    pub seed: u64,
    pub fusion: Option<FusionConfig>,
}

impl Default for TriadicConfig {
    fn default() -> Self {
        TriadicConfig {
            rule_weight: 1.0,
            exponent: Exponent::Squared,
            coupling_weight: 10.0,
            prior_weight: 1.0,
            learn: LearnConfig::default(),
            target_fraction: 1.0 / 3.0,
            seed: 0,
            fusion: None,
        }
    }
}

/// Triad rules plus edge coupling, optionally fused with per-edge sign
/// probabilities. The weight vector has one entry per rule, followed by
/// `λ₁, λ₀` when fusion is on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriadicModel {
    pub rules: Vec<Rule>,
    pub weights: Vec<f64>,
    pub fused: bool,
    pub coupling_slots: Vec<u32>,
    pub solver: SolverConfig,
}

impl TriadicModel {
    pub fn untrained(cfg: &TriadicConfig) -> Self {
        Self::from_rules(triadic_rules(cfg.rule_weight, cfg.exponent), cfg)
    }

    /// Model over `rules` (which must not include the coupling rules; they
    /// are appended here).
    pub fn from_rules(mut rules: Vec<Rule>, cfg: &TriadicConfig) -> Self {
        let first = rules.len() as u32;
        rules.extend(coupling_rules(cfg.coupling_weight));
        rules.extend(edge_prior_rules(cfg.prior_weight));
        let mut weights: Vec<f64> = rules.iter().map(|r| r.weight).collect();
        if let Some(f) = &cfg.fusion {
            weights.push(f.lambda_1);
            weights.push(f.lambda_0);
        }
        TriadicModel {
            rules,
            weights,
            fused: cfg.fusion.is_some(),
            coupling_slots: vec![first, first + 1],
            solver: cfg.learn.solver.clone(),
        }
    }

    /// Rules carrying the current weights.
    pub fn weighted_rules(&self) -> Vec<Rule> {
        self.rules
            .iter()
            .zip(&self.weights)
            .map(|(r, &w)| Rule { weight: w, ..r.clone() })
            .collect()
    }

    /// `(λ₁, λ₀)` when fused.
    pub fn fusion_weights(&self) -> Option<(f64, f64)> {
        self.fused.then(|| {
            let n = self.rules.len();
            (self.weights[n], self.weights[n + 1])
        })
    }

    /// Grounds over `net` with `free` pairs free. `priors`, aligned with
    /// `free`, adds the edge-cost potentials.
    pub fn ground(
        &self,
        net: &SignedNetwork,
        free: &[(NodeId, NodeId)],
        latent: LatentAtoms<'_>,
        priors: Option<&[f64]>,
    ) -> Result<HlMrf, Error> {
        let mut mrf = Grounder::new(net)
            .free_pairs(free.iter().copied())
            .latent(latent)
            .ground(&self.rules)?;
        if self.fused {
            let pos = mrf.add_slot("lambda_1", self.weights[self.rules.len()]);
            let neg = mrf.add_slot("lambda_0", self.weights[self.rules.len() + 1]);
            if let Some(p) = priors {
                if p.len() != free.len() {
                    return Err(Error::Invalid(format!(
                        "{} sign probabilities for {} pairs",
                        p.len(),
                        free.len()
                    )));
                }
                let costs: Vec<_> = free.iter().copied().zip(p.iter().copied()).collect();
                fuse_priors(&mut mrf, &costs, pos, neg)?;
            }
        }
        Ok(mrf)
    }

    /// Learns weights on `train`, hiding a seeded stratified subset of its
    /// edges.
    pub fn fit(train: &SignedNetwork, cfg: &TriadicConfig) -> Result<(Self, LearnReport), Error> {
        let targets = internal_split(train, cfg.target_fraction, cfg.seed);
        let mut model = Self::untrained(cfg);
        let report = model.learn(train, &targets, None, &cfg.learn)?;
        Ok((model, report))
    }

    /// One learning run with `targets` free and the rest of `train` observed.
    pub fn learn(
        &mut self,
        train: &SignedNetwork,
        targets: &[(NodeId, NodeId)],
        priors: Option<&[f64]>,
        cfg: &LearnConfig,
    ) -> Result<LearnReport, Error> {
        if train.edge_count() == 0 {
            return Err(Error::EmptyTraining);
        }
        let mrf = self.ground(train, targets, LatentAtoms::Absent, priors)?;
        let truth = truth_vector(&mrf, train)?;
        let mut cfg = cfg.clone();
        cfg.frozen.extend(&self.coupling_slots);
        Ok(learn_weights(&mrf, &truth, &mut self.weights, &cfg)?)
    }

    /// Scores `pairs` (probability-like values of `Upvote`) given the
    /// observed edges of `net`. Pairs absent from `net` are added as
    /// unobserved edges.
    pub fn predict(
        &self,
        net: &SignedNetwork,
        pairs: &[(NodeId, NodeId)],
        priors: Option<&[f64]>,
    ) -> Result<Vec<f64>, Error> {
        let net = with_pairs(net, pairs)?;
        let mrf = self.ground(&net, pairs, LatentAtoms::Absent, priors)?;
        let map = map_inference(&mrf, &self.weights, &self.solver)?;
        Ok(upvote_scores(&mrf, &map.assignment.values, pairs))
    }
}

/// `net` with every pair of `pairs` present. Missing ones get a
/// placeholder positive sign, which is never read while they are free.
pub fn with_pairs<'a>(
    net: &'a SignedNetwork,
    pairs: &[(NodeId, NodeId)],
) -> Result<std::borrow::Cow<'a, SignedNetwork>, Error> {
    if pairs.iter().all(|&(a, b)| net.has_edge(a, b)) {
        return Ok(std::borrow::Cow::Borrowed(net));
    }
    let mut aug = net.clone();
    for &(a, b) in pairs {
        if !aug.has_edge(a, b) {
            aug.add_edge(a, b, Sign::Positive, None)?;
        }
    }
    Ok(std::borrow::Cow::Owned(aug))
}

/// `Upvote` value per pair, 0.5 for pairs without an atom.
pub fn upvote_scores(mrf: &HlMrf, values: &[f64], pairs: &[(NodeId, NodeId)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(a, b)| {
            mrf.free_index(&crate::psl::AtomKey::up(a, b))
                .map_or(0.5, |i| values[i])
        })
        .collect()
}

/// True values of the free atoms of an MRF grounded over `net`. Every free
/// atom must be an edge atom of `net`.
pub fn truth_vector(mrf: &HlMrf, net: &SignedNetwork) -> Result<Vec<f64>, Error> {
    mrf.truth_from(net)
        .into_iter()
        .zip(mrf.free_atoms())
        .map(|(t, k)| {
            t.ok_or_else(|| Error::Invalid(format!("no ground truth for free atom {k:?}")))
        })
        .collect()
}
