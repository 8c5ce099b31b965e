//! Convex MAP inference over the box `[0,1]^n`.
//!
//! Coordinate descent minimizes each coordinate exactly: the restriction of
//! the objective to one atom is a sum of one-dimensional (squared) hinges, so
//! its derivative is piecewise linear and non-decreasing and the root can be
//! located by sweeping the breakpoints. Coordinate descent can stall on
//! non-differentiable couplings (linear hinges over several atoms); for those
//! MRFs [`InferenceMethod::Auto`] runs consensus ADMM first and polishes the
//! result with coordinate descent.

use serde::{Deserialize, Serialize};

use super::{AtomKey, Exponent, HlMrf, PslError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InferenceMethod {
    #[default]
    Auto,
    CoordinateDescent,
    Admm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: InferenceMethod,
    /// Stop once the relative objective improvement stays below `tol` for
    /// `patience` consecutive sweeps.
    pub tol: f64,
    pub patience: usize,
    pub max_sweeps: usize,
    pub admm_rho: f64,
    pub admm_eps: f64,
    pub admm_max_iters: usize,
    /// Starting value for every free atom when no warm start is given.
    pub init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: InferenceMethod::Auto,
            tol: 1e-6,
            patience: 10,
            max_sweeps: 10_000,
            admm_rho: 1.0,
            admm_eps: 1e-8,
            admm_max_iters: 20_000,
            init: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<f64>,
}

impl Assignment {
    pub fn get(&self, mrf: &HlMrf, key: &AtomKey) -> Option<f64> {
        mrf.free_index(key).map(|i| self.values[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapResult {
    pub assignment: Assignment,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub method: InferenceMethod,
}

/// Flattened hinges `w · max(0, c + Σ a_j x_j)^p` with a per-atom incidence
/// index.
struct Hinges {
    weight: Vec<f64>,
    squared: Vec<bool>,
    constant: Vec<f64>,
    start: Vec<usize>,
    atom: Vec<u32>,
    coef: Vec<f64>,
    offset: f64,
    inc_start: Vec<usize>,
    inc_hinge: Vec<u32>,
    inc_coef: Vec<f64>,
}

impl Hinges {
    fn build(mrf: &HlMrf, weights: &[f64]) -> Hinges {
        let n = mrf.num_free();
        let mut h = Hinges {
            weight: Vec::new(),
            squared: Vec::new(),
            constant: Vec::new(),
            start: vec![0],
            atom: Vec::new(),
            coef: Vec::new(),
            offset: 0.0,
            inc_start: Vec::new(),
            inc_hinge: Vec::new(),
            inc_coef: Vec::new(),
        };
        let mut terms = Vec::new();
        for g in mrf.ground_rules() {
            let w = weights[g.slot as usize] * g.scale;
            if w <= 0.0 {
                continue;
            }
            terms.clear();
            let c = mrf.linear_form(g, &mut terms);
            terms.sort_unstable_by_key(|t| t.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(terms.len());
            for &(i, a) in &terms {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += a,
                    _ => merged.push((i, a)),
                }
            }
            merged.retain(|t| t.1 != 0.0);
            let sq = g.exponent == Exponent::Squared;
            let max_lin = c + merged.iter().map(|t| t.1.max(0.0)).sum::<f64>();
            if max_lin <= 0.0 {
                continue;
            }
            if merged.is_empty() {
                h.offset += w * if sq { c * c } else { c };
                continue;
            }
            h.weight.push(w);
            h.squared.push(sq);
            h.constant.push(c);
            for (i, a) in merged {
                h.atom.push(i);
                h.coef.push(a);
            }
            h.start.push(h.atom.len());
        }

        let mut count = vec![0usize; n + 1];
        for &i in &h.atom {
            count[i as usize + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        h.inc_start = count.clone();
        h.inc_hinge = vec![0; h.atom.len()];
        h.inc_coef = vec![0.0; h.atom.len()];
        let mut fill = count;
        for k in 0..h.len() {
            for j in h.start[k]..h.start[k + 1] {
                let i = h.atom[j] as usize;
                h.inc_hinge[fill[i]] = k as u32;
                h.inc_coef[fill[i]] = h.coef[j];
                fill[i] += 1;
            }
        }
        h
    }

    fn len(&self) -> usize {
        self.weight.len()
    }

    fn lin(&self, k: usize, x: &[f64]) -> f64 {
        let mut v = self.constant[k];
        for j in self.start[k]..self.start[k + 1] {
            v += self.coef[j] * x[self.atom[j] as usize];
        }
        v
    }

    fn value(&self, k: usize, lin: f64) -> f64 {
        let d = lin.max(0.0);
        self.weight[k] * if self.squared[k] { d * d } else { d }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.offset + (0..self.len()).map(|k| self.value(k, self.lin(k, x))).sum::<f64>()
    }

    fn has_coupled_linear(&self) -> bool {
        (0..self.len()).any(|k| !self.squared[k] && self.start[k + 1] - self.start[k] > 1)
    }
}

/// Minimizes `Σ w·max(0, b + a t)^p` over `t ∈ [0,1]` given per-hinge
/// `(w, squared, a, b)`. Breakpoint buffer is reused across calls.
fn minimize_1d(segs: &[(f64, bool, f64, f64)], events: &mut Vec<(f64, usize)>) -> Option<f64> {
    // derivative on the current interval is A·t + B
    let mut big_a = 0.0;
    let mut big_b = 0.0;
    events.clear();
    let contribution = |&(w, sq, a, b): &(f64, bool, f64, f64)| {
        if sq {
            (2.0 * w * a * a, 2.0 * w * a * b)
        } else {
            (0.0, w * a)
        }
    };
    for (k, s) in segs.iter().enumerate() {
        let (_, _, a, b) = *s;
        if a == 0.0 {
            continue;
        }
        let t = -b / a;
        let active_at_zero = b > 0.0 || (b == 0.0 && a > 0.0);
        if active_at_zero {
            let (da, db) = contribution(s);
            big_a += da;
            big_b += db;
            if a < 0.0 && t < 1.0 {
                events.push((t, k));
            }
        } else if a > 0.0 && t < 1.0 {
            events.push((t, k));
        }
    }
    if events.is_empty() && big_a == 0.0 && big_b == 0.0 {
        return None;
    }
    events.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let mut lo = 0.0;
    for &(t, k) in events.iter() {
        let t = t.max(0.0);
        if big_a * lo + big_b >= 0.0 {
            return Some(lo);
        }
        if big_a * t + big_b > 0.0 {
            return Some((-big_b / big_a).clamp(lo, t));
        }
        let (da, db) = contribution(&segs[k]);
        if segs[k].2 > 0.0 {
            big_a += da;
            big_b += db;
        } else {
            big_a -= da;
            big_b -= db;
        }
        lo = t;
    }
    if big_a * lo + big_b >= 0.0 {
        return Some(lo);
    }
    if big_a * 1.0 + big_b > 0.0 {
        return Some((-big_b / big_a).clamp(lo, 1.0));
    }
    Some(1.0)
}

struct CdOutcome {
    sweeps: usize,
    converged: bool,
}

fn coordinate_descent(h: &Hinges, x: &mut [f64], cfg: &SolverConfig) -> CdOutcome {
    let n = x.len();
    let mut lin: Vec<f64> = (0..h.len()).map(|k| h.lin(k, x)).collect();
    let mut segs: Vec<(f64, bool, f64, f64)> = Vec::new();
    let mut events = Vec::new();
    let mut prev = h.offset + (0..h.len()).map(|k| h.value(k, lin[k])).sum::<f64>();
    let mut quiet = 0;
    for sweep in 1..=cfg.max_sweeps {
        let mut max_step: f64 = 0.0;
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let range = h.inc_start[i]..h.inc_start[i + 1];
            if range.is_empty() {
                continue;
            }
            segs.clear();
            for j in range.clone() {
                let k = h.inc_hinge[j] as usize;
                let a = h.inc_coef[j];
                segs.push((h.weight[k], h.squared[k], a, lin[k] - a * x[i]));
            }
            let Some(t) = minimize_1d(&segs, &mut events) else {
                continue;
            };
            let delta = t - x[i];
            if delta != 0.0 {
                x[i] = t;
                for j in range {
                    lin[h.inc_hinge[j] as usize] += h.inc_coef[j] * delta;
                }
                max_step = max_step.max(delta.abs());
            }
        }
        if sweep % 32 == 0 {
            for (k, l) in lin.iter_mut().enumerate() {
                *l = h.lin(k, x);
            }
        }
        let obj = h.offset + (0..h.len()).map(|k| h.value(k, lin[k])).sum::<f64>();
        if max_step < 1e-12 {
            return CdOutcome {
                sweeps: sweep,
                converged: true,
            };
        }
        if prev - obj <= cfg.tol * obj.abs() {
            quiet += 1;
            if quiet >= cfg.patience {
                return CdOutcome {
                    sweeps: sweep,
                    converged: true,
                };
            }
        } else {
            quiet = 0;
        }
        prev = obj;
    }
    CdOutcome {
        sweeps: cfg.max_sweeps,
        converged: false,
    }
}

fn admm(h: &Hinges, x: &mut [f64], cfg: &SolverConfig) -> CdOutcome {
    let n = x.len();
    let m = h.atom.len();
    let rho = cfg.admm_rho;
    let mut y: Vec<f64> = h.atom.iter().map(|&i| x[i as usize]).collect();
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; m];
    let copies: Vec<usize> = (0..n).map(|i| h.inc_start[i + 1] - h.inc_start[i]).collect();
    let mut acc = vec![0.0; n];
    let scale = (m.max(1) as f64).sqrt();
    for iter in 1..=cfg.admm_max_iters {
        for k in 0..h.len() {
            let r = h.start[k]..h.start[k + 1];
            let mut lin = h.constant[k];
            let mut norm2 = 0.0;
            for j in r.clone() {
                v[j] = x[h.atom[j] as usize] - u[j];
                lin += h.coef[j] * v[j];
                norm2 += h.coef[j] * h.coef[j];
            }
            let w = h.weight[k];
            let step = if lin <= 0.0 {
                0.0
            } else if h.squared[k] {
                2.0 * w * lin / (rho + 2.0 * w * norm2)
            } else if lin - (w / rho) * norm2 >= 0.0 {
                w / rho
            } else {
                lin / norm2
            };
            for j in r {
                y[j] = v[j] - step * h.coef[j];
            }
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..m {
            acc[h.atom[j] as usize] += y[j] + u[j];
        }
        let mut dual = 0.0;
        for i in 0..n {
            if copies[i] > 0 {
                let nx = (acc[i] / copies[i] as f64).clamp(0.0, 1.0);
                dual += copies[i] as f64 * (nx - x[i]).powi(2);
                x[i] = nx;
            }
        }
        let mut primal = 0.0;
        for j in 0..m {
            let r = y[j] - x[h.atom[j] as usize];
            u[j] += r;
            primal += r * r;
        }
        let tol = cfg.admm_eps * scale;
        if primal.sqrt() < tol && rho * dual.sqrt() < tol {
            return CdOutcome {
                sweeps: iter,
                converged: true,
            };
        }
    }
    CdOutcome {
        sweeps: cfg.admm_max_iters,
        converged: false,
    }
}

/// MAP state of `mrf` under `weights`, starting from `cfg.init`.
pub fn map_inference(mrf: &HlMrf, weights: &[f64], cfg: &SolverConfig) -> Result<MapResult, PslError> {
    let init = vec![cfg.init.clamp(0.0, 1.0); mrf.num_free()];
    map_inference_from(mrf, weights, cfg, &init)
}

/// MAP state starting from `init`. The optimum does not depend on the
/// starting point; only the work needed to reach it does.
pub fn map_inference_from(
    mrf: &HlMrf,
    weights: &[f64],
    cfg: &SolverConfig,
    init: &[f64],
) -> Result<MapResult, PslError> {
    mrf.check_weights(weights)?;
    if init.len() != mrf.num_free() {
        return Err(PslError::AssignmentSize {
            expected: mrf.num_free(),
            got: init.len(),
        });
    }
    let h = Hinges::build(mrf, weights);
    let mut x: Vec<f64> = init.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let use_admm = match cfg.method {
        InferenceMethod::Auto => h.has_coupled_linear(),
        InferenceMethod::Admm => true,
        InferenceMethod::CoordinateDescent => false,
    };
    let (method, outcome) = if use_admm {
        let a = admm(&h, &mut x, cfg);
        let polish = coordinate_descent(&h, &mut x, cfg);
        (
            InferenceMethod::Admm,
            CdOutcome {
                sweeps: a.sweeps + polish.sweeps,
                converged: a.converged && polish.converged,
            },
        )
    } else {
        (InferenceMethod::CoordinateDescent, coordinate_descent(&h, &mut x, cfg))
    };
    if !outcome.converged {
        log::debug!("MAP inference stopped at the iteration cap ({} sweeps)", outcome.sweeps);
    }
    let objective = h.objective(&x);
    Ok(MapResult {
        assignment: Assignment { values: x },
        objective,
        sweeps: outcome.sweeps,
        converged: outcome.converged,
        method,
    })
}
