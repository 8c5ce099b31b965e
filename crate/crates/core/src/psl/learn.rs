//! Weight learning.
//!
//! MLE replaces the model expectation of each rule's potential by its value
//! at the MAP state (a structured perceptron). MPLE conditions each free atom
//! on the true values of all others and computes the one-dimensional
//! expectations by quadrature. Both gradients are divided by the number of
//! free atoms so the learning rate does not depend on the grounding size.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::infer::map_inference_from;
use super::quadrature::composite_points;
use super::{HlMrf, MapResult, Predicate, PslError, SolverConfig};
use crate::graph::{NodeId, SignedNetwork};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnMethod {
    #[default]
    Mle,
    Mple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub method: LearnMethod,
    pub epochs: usize,
    /// Step size at epoch 1; epoch `t` uses `learning_rate / √t`.
    pub learning_rate: f64,
    pub grad_tol: f64,
    /// Slots whose weights stay fixed.
    pub frozen: Vec<u32>,
    pub solver: SolverConfig,
    pub quad_panels: usize,
    pub quad_order: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            method: LearnMethod::Mle,
            epochs: 50,
            learning_rate: 0.1,
            grad_tol: 1e-6,
            frozen: Vec::new(),
            solver: SolverConfig::default(),
            quad_panels: 8,
            quad_order: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub epochs_run: usize,
    pub grad_norm: f64,
    /// Gradient norm per epoch.
    pub history: Vec<f64>,
    /// Set when learning was skipped, with the reason.
    pub skipped: Option<String>,
}

fn check_truth(mrf: &HlMrf, truth: &[f64]) -> Result<(), PslError> {
    if truth.len() != mrf.num_free() {
        return Err(PslError::AssignmentSize {
            expected: mrf.num_free(),
            got: truth.len(),
        });
    }
    Ok(())
}

fn norm_factor(mrf: &HlMrf) -> f64 {
    mrf.num_free().max(1) as f64
}

/// `[Φ(truth) − Φ(MAP)] / n` together with the MAP state it used.
pub fn mle_gradient(
    mrf: &HlMrf,
    truth: &[f64],
    weights: &[f64],
    solver: &SolverConfig,
) -> Result<(Vec<f64>, MapResult), PslError> {
    let init = vec![solver.init; mrf.num_free()];
    mle_gradient_from(mrf, truth, weights, solver, &init)
}

fn mle_gradient_from(
    mrf: &HlMrf,
    truth: &[f64],
    weights: &[f64],
    solver: &SolverConfig,
    init: &[f64],
) -> Result<(Vec<f64>, MapResult), PslError> {
    check_truth(mrf, truth)?;
    let map = map_inference_from(mrf, weights, solver, init)?;
    let phi_truth = mrf.slot_potentials(truth)?;
    let phi_map = mrf.slot_potentials(&map.assignment.values)?;
    let n = norm_factor(mrf);
    let grad = phi_truth
        .iter()
        .zip(&phi_map)
        .map(|(t, m)| (t - m) / n)
        .collect();
    Ok((grad, map))
}

/// `[E(truth; w) − min_X E(X; w)] / n`, the loss whose gradient
/// [`mle_gradient`] returns.
pub fn surrogate_objective(
    mrf: &HlMrf,
    truth: &[f64],
    weights: &[f64],
    solver: &SolverConfig,
) -> Result<f64, PslError> {
    check_truth(mrf, truth)?;
    let e_truth = mrf.energy(weights, truth)?;
    let map = super::map_inference(mrf, weights, solver)?;
    Ok((e_truth - map.objective) / norm_factor(mrf))
}

/// Per-atom potentials `F_{i,s}(t)` at quadrature points, with every other
/// atom at its true value. Building them is the expensive part of MPLE;
/// afterwards a gradient costs one weighted sum per point.
#[derive(Clone, Debug)]
pub struct MpleTables {
    n_slots: usize,
    n_free: usize,
    atoms: Vec<AtomTable>,
}

#[derive(Clone, Debug)]
struct AtomTable {
    slots: Vec<u32>,
    ln_weights: Vec<f64>,
    /// Row-major `[point][slot]`.
    values: Vec<f64>,
    at_truth: Vec<f64>,
}

impl MpleTables {
    pub fn build(mrf: &HlMrf, truth: &[f64], panels: usize, order: usize) -> Result<Self, PslError> {
        check_truth(mrf, truth)?;
        let n = mrf.num_free();
        // per-atom list of (ground rule, coefficient, constant-with-others)
        let mut touching: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        let mut terms = Vec::new();
        for (gi, g) in mrf.ground_rules().iter().enumerate() {
            terms.clear();
            let c = mrf.linear_form(g, &mut terms);
            let full = c + terms.iter().map(|&(i, a)| a * truth[i as usize]).sum::<f64>();
            terms.sort_unstable_by_key(|t| t.0);
            let mut j = 0;
            while j < terms.len() {
                let i = terms[j].0;
                let mut a = 0.0;
                while j < terms.len() && terms[j].0 == i {
                    a += terms[j].1;
                    j += 1;
                }
                if a != 0.0 {
                    let b = full - a * truth[i as usize];
                    touching[i as usize].push((gi, a, b));
                }
            }
        }
        let rules = mrf.ground_rules();
        let atoms = touching
            .into_iter()
            .enumerate()
            .map(|(i, list)| {
                let mut slots: Vec<u32> = list.iter().map(|&(g, _, _)| rules[g].slot).collect();
                slots.sort_unstable();
                slots.dedup();
                let kinks: Vec<f64> = list
                    .iter()
                    .map(|&(_, a, b)| -b / a)
                    .filter(|t| *t > 0.0 && *t < 1.0)
                    .collect();
                let points = if kinks.len() <= 24 {
                    let p = panels.div_ceil(kinks.len() + 1).max(1);
                    composite_points(0.0, 1.0, &kinks, p, order)
                } else {
                    composite_points(0.0, 1.0, &[], panels, order)
                };
                let k = slots.len();
                let mut values = vec![0.0; points.len() * k];
                let mut at_truth = vec![0.0; k];
                for &(g, a, b) in &list {
                    let rule = &rules[g];
                    let col = slots.binary_search(&rule.slot).expect("slot listed");
                    for (q, &(t, _)) in points.iter().enumerate() {
                        values[q * k + col] += rule.scale * rule.exponent.apply((b + a * t).max(0.0));
                    }
                    at_truth[col] +=
                        rule.scale * rule.exponent.apply((b + a * truth[i]).max(0.0));
                }
                AtomTable {
                    slots,
                    ln_weights: points.iter().map(|&(_, w)| w.ln()).collect(),
                    values,
                    at_truth,
                }
            })
            .collect();
        Ok(MpleTables {
            n_slots: mrf.slots().len(),
            n_free: n,
            atoms,
        })
    }

    /// Gradient of the negative log pseudo-likelihood divided by the number
    /// of free atoms.
    pub fn gradient(&self, weights: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_slots];
        let mut logits = Vec::new();
        for atom in &self.atoms {
            let k = atom.slots.len();
            if k == 0 {
                continue;
            }
            logits.clear();
            for (q, lw) in atom.ln_weights.iter().enumerate() {
                let row = &atom.values[q * k..(q + 1) * k];
                let e: f64 = row
                    .iter()
                    .zip(&atom.slots)
                    .map(|(f, &s)| weights[s as usize] * f)
                    .sum();
                logits.push(lw - e);
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                z += *l;
            }
            for (col, &s) in atom.slots.iter().enumerate() {
                let mut expect = 0.0;
                for (q, p) in logits.iter().enumerate() {
                    expect += p * atom.values[q * k + col];
                }
                grad[s as usize] += atom.at_truth[col] - expect / z;
            }
        }
        let n = self.n_free.max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        grad
    }
}

/// MPLE gradient at `weights`. Rebuilds the tables; use [`MpleTables`]
/// directly when evaluating many weight vectors.
pub fn mple_gradient(
    mrf: &HlMrf,
    truth: &[f64],
    weights: &[f64],
    cfg: &LearnConfig,
) -> Result<Vec<f64>, PslError> {
    mrf.check_weights(weights)?;
    Ok(MpleTables::build(mrf, truth, cfg.quad_panels, cfg.quad_order)?.gradient(weights))
}

/// Projected gradient descent on the chosen loss with a `1/√t` step decay.
/// Weights are clipped at zero; frozen slots never move.
pub fn learn_weights(
    mrf: &HlMrf,
    truth: &[f64],
    weights: &mut [f64],
    cfg: &LearnConfig,
) -> Result<LearnReport, PslError> {
    mrf.check_weights(weights)?;
    check_truth(mrf, truth)?;
    let mut report = LearnReport::default();

    let ups: Vec<f64> = mrf
        .free_atoms()
        .iter()
        .zip(truth)
        .filter(|(k, _)| k.predicate == Predicate::Upvote)
        .map(|(_, &v)| v)
        .collect();
    if !ups.is_empty() {
        if ups.iter().all(|&v| v >= 0.5) {
            log::warn!("no negative training edges; weights left unchanged");
            report.skipped = Some("no negative training edges".into());
            return Ok(report);
        }
        if ups.iter().all(|&v| v < 0.5) {
            log::warn!("no positive training edges; weights left unchanged");
            report.skipped = Some("no positive training edges".into());
            return Ok(report);
        }
    }

    let learnable: Vec<bool> = (0..weights.len())
        .map(|s| !cfg.frozen.contains(&(s as u32)))
        .collect();
    let tables = match cfg.method {
        LearnMethod::Mple if cfg.epochs > 0 => Some(MpleTables::build(
            mrf,
            truth,
            cfg.quad_panels,
            cfg.quad_order,
        )?),
        _ => None,
    };
    let mut warm = vec![cfg.solver.init; mrf.num_free()];
    for epoch in 1..=cfg.epochs {
        let grad = match &tables {
            Some(t) => t.gradient(weights),
            None => {
                let (g, map) = mle_gradient_from(mrf, truth, weights, &cfg.solver, &warm)?;
                warm = map.assignment.values;
                g
            }
        };
        let norm = grad
            .iter()
            .zip(&learnable)
            .filter(|(_, &l)| l)
            .map(|(g, _)| g * g)
            .sum::<f64>()
            .sqrt();
        report.history.push(norm);
        report.grad_norm = norm;
        report.epochs_run = epoch;
        if !norm.is_finite() {
            return Err(PslError::BadWeight {
                slot: grad.iter().position(|g| !g.is_finite()).unwrap_or(0),
                value: f64::NAN,
            });
        }
        if norm < cfg.grad_tol {
            break;
        }
        let eta = cfg.learning_rate / (epoch as f64).sqrt();
        for (s, w) in weights.iter_mut().enumerate() {
            if learnable[s] {
                *w = (*w - eta * grad[s]).max(0.0);
            }
        }
    }
    Ok(report)
}

/// Stratified random subset of the edges of `net` holding roughly
/// `target_fraction` of each sign. Used to hide part of the training edges
/// so that learning has free atoms to fit.
pub fn internal_split(net: &SignedNetwork, target_fraction: f64, seed: u64) -> Vec<(NodeId, NodeId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(NodeId, NodeId)> = Vec::new();
    let mut neg: Vec<(NodeId, NodeId)> = Vec::new();
    for (s, t, sign) in net.signed_pairs() {
        if sign.is_positive() {
            pos.push((s, t));
        } else {
            neg.push((s, t));
        }
    }
    let mut out = Vec::new();
    for mut group in [pos, neg] {
        group.shuffle(&mut rng);
        let mut k = (group.len() as f64 * target_fraction).round() as usize;
        if k == 0 && group.len() >= 2 && target_fraction > 0.0 {
            k = 1;
        }
        out.extend_from_slice(&group[..k.min(group.len())]);
    }
    out.sort_unstable();
    out
}
