//! Per-node latent `Active` / `Favorable` values fitted by hard EM next to
//! the triad rules.

use std::io::Write;
use std::ops::Not;

use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, SignedNetwork};
use crate::psl::{
    internal_split, learn_weights, map_inference_from, Exponent, GroundScope, Grounder,
    HlMrf, LatentAtoms, LatentValues, Literal, Predicate, Rule,
};
use crate::triadic::{triadic_rules, truth_vector, upvote_scores, with_pairs, TriadicConfig, TriadicModel};
use crate::Error;

pub type LatentAssignment = LatentValues;

/// The ten latent rules: both directions of "active voters upvote" and
/// "favorable candidates get upvotes", plus negative priors.
pub fn latent_rules(default_weight: f64, exponent: Exponent) -> Vec<Rule> {
    let up = || Literal::new(Predicate::Upvote, &["A", "B"]);
    let down = || Literal::new(Predicate::Downvote, &["A", "B"]);
    let act = || Literal::new(Predicate::Active, &["A"]);
    let fav = || Literal::new(Predicate::Favorable, &["B"]);
    let r = |id: &str, body: Vec<Literal>, head: Literal| Rule::new(id, default_weight, body, head, exponent);
    vec![
        r("active_up", vec![act()], up()),
        r("active_not_down", vec![act()], down().not()),
        r("inactive_down", vec![act().not()], down()),
        r("favorable_up", vec![fav()], up()),
        r("unfavorable_down", vec![fav().not()], down()),
        r("up_active", vec![up()], act()),
        r("up_favorable", vec![up()], fav()),
        r("down_unfavorable", vec![down()], fav().not()),
        r("prior_active", vec![], Literal::new(Predicate::Active, &["A"]).not()),
        r("prior_favorable", vec![], Literal::new(Predicate::Favorable, &["A"]).not()),
    ]
}

/// Share of positive out-edges (active) and in-edges (favorable); 0.5
/// without edges.
pub fn initial_latent(net: &SignedNetwork) -> LatentValues {
    let mut z = LatentValues::uniform(net.node_count(), 0.5);
    for v in net.nodes() {
        let d = net.degree_stats(v).expect("node in range");
        if d.out_degree() > 0 {
            z.active[v.index()] = d.out_pos as f64 / d.out_degree() as f64;
        }
        if d.in_degree() > 0 {
            z.favorable[v.index()] = d.in_pos as f64 / d.in_degree() as f64;
        }
    }
    z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    pub triadic: TriadicConfig,
    pub latent_weight: f64,
    pub latent_exponent: Exponent,
    /// Keep the sixteen triad rules alongside the latent ones.
    pub include_triadic: bool,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            triadic: TriadicConfig::default(),
            latent_weight: 1.0,
            latent_exponent: Exponent::Squared,
            include_triadic: true,
            max_iters: 20,
            tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub model: TriadicModel,
    pub latent: LatentValues,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    pub sweeps: usize,
    /// EM objective before the first sweep and after each one.
    pub objectives: Vec<f64>,
    /// ∞-norm change of the latent values per sweep.
    pub deltas: Vec<f64>,
    pub converged: bool,
}

impl LatentModel {
    pub fn untrained(net: &SignedNetwork, cfg: &LatentConfig) -> Self {
        let mut rules = if cfg.include_triadic {
            triadic_rules(cfg.triadic.rule_weight, cfg.triadic.exponent)
        } else {
            Vec::new()
        };
        rules.extend(latent_rules(cfg.latent_weight, cfg.latent_exponent));
        LatentModel {
            model: TriadicModel::from_rules(rules, &cfg.triadic),
            latent: initial_latent(net),
        }
    }

    /// Slots of the ten latent rules.
    pub fn latent_slots(&self) -> Vec<usize> {
        let ids: Vec<String> = latent_rules(0.0, Exponent::Linear)
            .into_iter()
            .map(|r| r.id)
            .collect();
        self.model
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| ids.contains(&r.id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Scores `pairs` with the latent atoms fixed at the fitted values.
    pub fn predict(&self, net: &SignedNetwork, pairs: &[(NodeId, NodeId)]) -> Result<Vec<f64>, Error> {
        predict_with_latent(&self.model, &self.latent, net, pairs)
    }
}

pub fn predict_with_latent(
    model: &TriadicModel,
    latent: &LatentValues,
    net: &SignedNetwork,
    pairs: &[(NodeId, NodeId)],
) -> Result<Vec<f64>, Error> {
    let net = with_pairs(net, pairs)?;
    let mrf = model.ground(&net, pairs, LatentAtoms::Observed(latent), None)?;
    let init = vec![model.solver.init; mrf.num_free()];
    let map = map_inference_from(&mrf, &model.weights, &model.solver, &init)?;
    Ok(upvote_scores(&mrf, &map.assignment.values, pairs))
}

/// MAP over the latent atoms of `mrf` (grounded with `LatentAtoms::Free`
/// and every edge observed), warm-started from `z`. If the solve does not
/// improve the objective the old values are kept.
fn e_step_on(mrf: &HlMrf, model: &TriadicModel, z: &LatentValues) -> Result<LatentValues, Error> {
    let init: Vec<f64> = mrf
        .free_atoms()
        .iter()
        .map(|k| z.get(k.predicate, k.a).unwrap_or(0.5))
        .collect();
    let before = mrf.energy(&model.weights, &init)?;
    let map = map_inference_from(mrf, &model.weights, &model.solver, &init)?;
    let after = mrf.energy(&model.weights, &map.assignment.values)?;
    let mut out = z.clone();
    if after < before {
        for (k, &v) in mrf.free_atoms().iter().zip(&map.assignment.values) {
            out.set(k.predicate, k.a, v);
        }
    }
    Ok(out)
}

/// One E-step over all edges of `net`.
pub fn e_step(model: &TriadicModel, net: &SignedNetwork, z: &LatentValues) -> Result<LatentValues, Error> {
    let mrf = model.ground(net, &[], LatentAtoms::Free, None)?;
    e_step_on(&mrf, model, z)
}

/// Hard EM. Each sweep infers the latent values from the evidence part of
/// `train` (E-step), then learns the weights with the latent values
/// observed and the held-out part of `train` free (M-step). New weights are
/// scaled down when needed so that the EM objective
/// `Σ w·d^p` over the evidence edges never increases; the MAP state is
/// invariant to that scaling. A last E-step over all of `train` produces the
/// latent values used for prediction.
pub fn em_fit(train: &SignedNetwork, cfg: &LatentConfig) -> Result<(LatentModel, EmReport), Error> {
    if train.edge_count() == 0 {
        return Err(Error::EmptyTraining);
    }
    let mut lm = LatentModel::untrained(train, cfg);
    let mut report = EmReport::default();
    if cfg.max_iters == 0 {
        return Ok((lm, report));
    }

    let targets = internal_split(train, cfg.triadic.target_fraction, cfg.triadic.seed);
    let evidence = train.without_pairs(&targets);
    let e_mrf = lm.model.ground(&evidence, &[], LatentAtoms::Free, None)?;
    let mut omega = Grounder::new(&evidence)
        .latent(LatentAtoms::Observed(&lm.latent))
        .scope(GroundScope::All)
        .ground(&lm.model.rules)?;
    let mut m_mrf = lm
        .model
        .ground(train, &targets, LatentAtoms::Observed(&lm.latent), None)?;
    let truth = truth_vector(&m_mrf, train)?;
    let mut learn_cfg = cfg.triadic.learn.clone();
    learn_cfg.frozen.extend(&lm.model.coupling_slots);

    report.objectives.push(omega.energy(&lm.model.weights, &[])?);
    for _ in 0..cfg.max_iters {
        let z = e_step_on(&e_mrf, &lm.model, &lm.latent)?;
        omega.set_latent_values(&z);
        m_mrf.set_latent_values(&z);
        let after_e = omega.energy(&lm.model.weights, &[])?;

        let mut w = lm.model.weights.clone();
        learn_weights(&m_mrf, &truth, &mut w, &learn_cfg)?;
        let after_m = omega.energy(&w, &[])?;
        if after_m > after_e {
            let k = after_e / after_m;
            w.iter_mut().for_each(|x| *x *= k);
        }
        lm.model.weights = w;

        let delta = lm
            .latent
            .active
            .iter()
            .zip(&z.active)
            .chain(lm.latent.favorable.iter().zip(&z.favorable))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        lm.latent = z;
        report.sweeps += 1;
        report.deltas.push(delta);
        report.objectives.push(omega.energy(&lm.model.weights, &[])?);
        if delta < cfg.tol {
            report.converged = true;
            break;
        }
    }
    lm.latent = e_step(&lm.model, train, &lm.latent)?;
    Ok((lm, report))
}

/// Writes `node_id,active,favorable` rows.
pub fn write_latent_csv<W: Write>(mut w: W, z: &LatentValues) -> std::io::Result<()> {
    writeln!(w, "node_id,active,favorable")?;
    for (i, (a, f)) in z.active.iter().zip(&z.favorable).enumerate() {
        writeln!(w, "{i},{a},{f}")?;
    }
    Ok(())
}
