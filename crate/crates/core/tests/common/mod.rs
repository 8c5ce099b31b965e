//! Oracle checks shared by the property tests and the acceptance binary.
//! Each returns a one-line summary on success and a description of the
//! first mismatch on failure.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signpred::eval::{auc_pr, auc_roc, EvalError, RelevantClass, ScoredEdge};
use signpred::graph::NodeId;
use signpred::ingest::{
    build_network, parse_records, sample_and_balance, write_comments, write_edge_list,
    write_records, IngestConfig,
};
use signpred::latent::{em_fit, LatentConfig};
use signpred::psl::{
    map_inference, mle_gradient, surrogate_objective, AtomKey, AtomRef, Exponent, GroundLiteral,
    GroundRule, HlMrf, InferenceMethod, Predicate, SolverConfig,
};
use signpred::sentiment::{logreg_gradient, logreg_loss, FeatureVector, LogRegModel};
use signpred::synth::{generate, SynthConfig};
use signpred::triadic::{literal_sign, triadic_rules};

pub type Check = Result<String, String>;

/// A literal over `free[i]` or `observed[i]`.
#[derive(Clone, Copy, Debug)]
pub struct Lit {
    pub free: bool,
    pub index: usize,
    pub negated: bool,
}

#[derive(Clone, Debug)]
pub struct RuleDesc {
    pub slot: usize,
    pub squared: bool,
    pub scale: f64,
    pub body: Vec<Lit>,
    pub head: Option<Lit>,
}

/// A hand-rolled MRF kept next to the engine's copy so the oracle never
/// reads back through the engine.
#[derive(Clone, Debug)]
pub struct MrfDesc {
    pub n_free: usize,
    pub observed: Vec<f64>,
    pub weights: Vec<f64>,
    pub rules: Vec<RuleDesc>,
}

impl MrfDesc {
    pub fn random(rng: &mut ChaCha8Rng, n_free: usize, squared_only: bool) -> Self {
        let n_obs = rng.gen_range(0..=2);
        // values on a 0.002 lattice keep most kinks on the 0.001 grid
        let observed = (0..n_obs).map(|_| rng.gen_range(0..=500) as f64 * 0.002).collect();
        let n_slots = rng.gen_range(1..=3);
        let weights = (0..n_slots).map(|_| rng.gen_range(0.1..3.0)).collect();
        let n_rules = rng.gen_range(1..=6);
        let lit = |rng: &mut ChaCha8Rng| {
            let free = n_obs == 0 || rng.gen_bool(0.7);
            Lit {
                free,
                index: if free { rng.gen_range(0..n_free) } else { rng.gen_range(0..n_obs) },
                negated: rng.gen_bool(0.5),
            }
        };
        let rules = (0..n_rules)
            .map(|_| {
                let body = (0..rng.gen_range(0..=2)).map(|_| lit(rng)).collect::<Vec<_>>();
                let head = if body.is_empty() || rng.gen_bool(0.8) { Some(lit(rng)) } else { None };
                RuleDesc {
                    slot: rng.gen_range(0..n_slots),
                    squared: squared_only || rng.gen_bool(0.5),
                    scale: if rng.gen_bool(0.8) { 1.0 } else { rng.gen_range(0.2..1.0) },
                    body,
                    head,
                }
            })
            .collect();
        MrfDesc {
            n_free,
            observed,
            weights,
            rules,
        }
    }

    pub fn build(&self) -> HlMrf {
        let mut mrf = HlMrf::default();
        for (s, &w) in self.weights.iter().enumerate() {
            mrf.add_slot(&format!("s{s}"), w);
        }
        let free: Vec<AtomRef> = (0..self.n_free)
            .map(|i| mrf.add_free_atom(AtomKey::node(Predicate::Active, NodeId(i as u32))))
            .collect();
        let obs: Vec<AtomRef> = self
            .observed
            .iter()
            .enumerate()
            .map(|(i, &v)| mrf.add_observed_atom(AtomKey::node(Predicate::Favorable, NodeId(i as u32)), v))
            .collect();
        let gl = |l: &Lit| GroundLiteral {
            atom: if l.free { free[l.index] } else { obs[l.index] },
            negated: l.negated,
        };
        for r in &self.rules {
            mrf.push_ground_rule(GroundRule {
                slot: r.slot as u32,
                scale: r.scale,
                exponent: if r.squared { Exponent::Squared } else { Exponent::Linear },
                body: r.body.iter().map(gl).collect(),
                head: r.head.as_ref().map(gl),
            })
            .expect("valid hand-built rule");
        }
        mrf
    }

    fn value(&self, l: &Lit, x: &[f64]) -> f64 {
        let v = if l.free { x[l.index] } else { self.observed[l.index] };
        if l.negated {
            1.0 - v
        } else {
            v
        }
    }

    /// Distance straight from the definition: Łukasiewicz conjunction of the
    /// body, minus the head, floored at zero.
    pub fn distance(&self, r: &RuleDesc, x: &[f64]) -> f64 {
        let body = r
            .body
            .iter()
            .fold(1.0, |acc, l| f64::max(0.0, acc + self.value(l, x) - 1.0));
        let head = r.head.as_ref().map_or(0.0, |h| self.value(h, x));
        (body - head).max(0.0)
    }

    pub fn energy(&self, weights: &[f64], x: &[f64]) -> f64 {
        self.rules
            .iter()
            .map(|r| {
                let d = self.distance(r, x);
                weights[r.slot] * r.scale * if r.squared { d * d } else { d }
            })
            .sum()
    }

    pub fn potentials(&self, x: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.weights.len()];
        for r in &self.rules {
            let d = self.distance(r, x);
            phi[r.slot] += r.scale * if r.squared { d * d } else { d };
        }
        phi
    }

    /// Each rule as `max(0, c + a·x)`, which equals the distance because the
    /// head value is never negative.
    fn affine(&self) -> Vec<(f64, [f64; 3], f64, bool)> {
        self.rules
            .iter()
            .map(|r| {
                let mut c = 1.0 - r.body.len() as f64;
                let mut a = [0.0; 3];
                let mut add = |l: &Lit, sign: f64| {
                    if l.free {
                        if l.negated {
                            c += sign;
                            a[l.index] -= sign;
                        } else {
                            a[l.index] += sign;
                        }
                    } else {
                        c += sign * self.value(l, &[]);
                    }
                };
                for l in &r.body {
                    add(l, 1.0);
                }
                if let Some(h) = &r.head {
                    add(h, -1.0);
                }
                (c, a, self.weights[r.slot] * r.scale, r.squared)
            })
            .collect()
    }

    /// Exhaustive search over the `0.001` lattice of `[0,1]^n`, `n ≤ 3`.
    pub fn grid_min(&self) -> f64 {
        assert!(self.n_free <= 3);
        let hinges = self.affine();
        let steps: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let one = [0.0];
        let ax = |k: usize| if self.n_free > k { &steps[..] } else { &one[..] };
        let mut best = f64::INFINITY;
        let mut base = vec![0.0; hinges.len()];
        for &x0 in ax(0) {
            for &x1 in ax(1) {
                for (b, h) in base.iter_mut().zip(&hinges) {
                    *b = h.0 + h.1[0] * x0 + h.1[1] * x1;
                }
                for &x2 in ax(2) {
                    let mut e = 0.0;
                    for (b, h) in base.iter().zip(&hinges) {
                        let t = (b + h.1[2] * x2).max(0.0);
                        e += h.2 * if h.3 { t * t } else { t };
                    }
                    best = best.min(e);
                }
            }
        }
        best
    }
}

/// MAP against exhaustive grid search on 50 random MRFs with 1–3 free atoms.
/// The solver's point must lie in the box, its reported objective must equal
/// the oracle energy there, and that energy may not exceed the grid minimum
/// by more than 1e-4.
pub fn map_matches_grid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let desc = MrfDesc::random(&mut rng, case % 3 + 1, false);
        let mrf = desc.build();
        let map = map_inference(&mrf, &desc.weights, &SolverConfig::default())
            .map_err(|e| format!("case {case}: {e}"))?;
        let x = &map.assignment.values;
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("case {case}: assignment {x:?} leaves the box"));
        }
        let e = desc.energy(&desc.weights, x);
        if (e - map.objective).abs() > 1e-9 * (1.0 + e.abs()) {
            return Err(format!("case {case}: reported {} but energy is {e}", map.objective));
        }
        let grid = desc.grid_min();
        if e > grid + 1e-4 {
            return Err(format!("case {case}: solver {e} vs grid {grid} ({desc:?})"));
        }
        worst = worst.max(e - grid);
    }
    Ok(format!("50 MRFs, worst solver-minus-grid gap {worst:.2e}"))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// MLE surrogate gradient against central differences of the surrogate on
/// 20 random squared-hinge MRFs (where the surrogate is differentiable).
pub fn mle_gradient_matches_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let solver = SolverConfig {
        method: InferenceMethod::CoordinateDescent,
        tol: 0.0,
        patience: 50,
        max_sweeps: 100_000,
        ..SolverConfig::default()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n_free = rng.gen_range(1..=4);
        let desc = MrfDesc::random(&mut rng, n_free, true);
        let mrf = desc.build();
        let truth: Vec<f64> = (0..desc.n_free).map(|_| rng.gen::<f64>()).collect();
        let w = desc.weights.clone();
        let (grad, map) = mle_gradient(&mrf, &truth, &w, &solver).map_err(|e| e.to_string())?;
        // independent recomputation of the envelope gradient
        let n = desc.n_free as f64;
        let expect: Vec<f64> = desc
            .potentials(&truth)
            .iter()
            .zip(desc.potentials(&map.assignment.values))
            .map(|(t, m)| (t - m) / n)
            .collect();
        for s in 0..w.len() {
            if (grad[s] - expect[s]).abs() > 1e-12 {
                return Err(format!("case {case} slot {s}: {} vs {}", grad[s], expect[s]));
            }
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[s] += h;
            wm[s] -= h;
            let fp = surrogate_objective(&mrf, &truth, &wp, &solver).map_err(|e| e.to_string())?;
            let fm = surrogate_objective(&mrf, &truth, &wm, &solver).map_err(|e| e.to_string())?;
            let fd = (fp - fm) / (2.0 * h);
            let r = rel_err(grad[s], fd);
            if r > 1e-5 {
                return Err(format!("case {case} slot {s}: analytic {} vs fd {fd} ({desc:?})", grad[s]));
            }
            worst = worst.max(r);
        }
    }
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

/// Logistic-regression gradient against central differences of the loss.
pub fn logreg_gradient_matches_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let dim = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=12);
        let xs: Vec<FeatureVector> = (0..n)
            .map(|_| {
                let mut entries = Vec::new();
                for c in 0..dim as u32 {
                    if rng.gen_bool(0.5) {
                        entries.push((c, rng.gen_range(0.0..3.0)));
                    }
                }
                FeatureVector { entries }
            })
            .collect();
        let ys: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let l2 = rng.gen_range(0.0..0.1);
        let model = LogRegModel {
            theta: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            bias: rng.gen_range(-1.0..1.0),
            threshold: 0.5,
        };
        let (g, gb) = logreg_gradient(&model, &xs, &ys, l2);
        #[allow(clippy::needless_range_loop)]
        for j in 0..=dim {
            let shift = |d: f64| {
                let mut m = model.clone();
                if j < dim {
                    m.theta[j] += d;
                } else {
                    m.bias += d;
                }
                logreg_loss(&m, &xs, &ys, l2)
            };
            let fd = (shift(h) - shift(-h)) / (2.0 * h);
            let an = if j < dim { g[j] } else { gb };
            let r = rel_err(an, fd);
            if r > 1e-5 {
                return Err(format!("case {case} coordinate {j}: analytic {an} vs fd {fd}"));
            }
            worst = worst.max(r);
        }
    }
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

/// ROC area by counting pairs.
pub fn brute_roc(scored: &[ScoredEdge]) -> Option<f64> {
    let mut wins2 = 0u64;
    let mut pairs = 0u64;
    for p in scored.iter().filter(|e| e.truth) {
        for n in scored.iter().filter(|e| !e.truth) {
            pairs += 1;
            wins2 += if p.score > n.score {
                2
            } else if p.score == n.score {
                1
            } else {
                0
            };
        }
    }
    (pairs > 0).then(|| wins2 as f64 / (2 * pairs) as f64)
}

/// Average precision: the mean, over relevant items, of the precision among
/// all items ranked at or above them (ties share a rank). The negative
/// class ranks low scores first.
pub fn brute_ap(scored: &[ScoredEdge], class: RelevantClass) -> Result<f64, EvalError> {
    let want = class == RelevantClass::Positive;
    let above = |a: f64, b: f64| if want { a >= b } else { a <= b };
    let relevant: Vec<&ScoredEdge> = scored.iter().filter(|e| e.truth == want).collect();
    if relevant.is_empty() {
        return Err(EvalError::NoRelevant);
    }
    if relevant.len() == scored.len() {
        return Err(EvalError::AllRelevant);
    }
    let mut sum = 0.0;
    for r in &relevant {
        let ranked = scored.iter().filter(|e| above(e.score, r.score)).count();
        let hits = relevant.iter().filter(|e| above(e.score, r.score)).count();
        sum += hits as f64 / ranked as f64;
    }
    Ok(sum / relevant.len() as f64)
}

/// Every score/label list of length 1–8 over the scores {0, 0.5, 1}.
/// ROC must match exactly; AP up to 1e-12 (the two sums run in different
/// orders). Error cases must agree.
pub fn auc_matches_brute_force() -> Check {
    const GRID: [f64; 3] = [0.0, 0.5, 1.0];
    let mut lists = 0u64;
    let mut list = Vec::with_capacity(8);
    for len in 1..=8u32 {
        let total = 6u64.pow(len);
        for code in 0..total {
            list.clear();
            let mut c = code;
            for _ in 0..len {
                let k = (c % 6) as usize;
                c /= 6;
                list.push(ScoredEdge::new(GRID[k / 2], k % 2 == 1));
            }
            match (auc_roc(&list), brute_roc(&list)) {
                (Ok(a), Some(b)) if a == b => {}
                (Err(EvalError::SingleClass { .. }), None) => {}
                (a, b) => return Err(format!("ROC on {list:?}: {a:?} vs {b:?}")),
            }
            for class in [RelevantClass::Positive, RelevantClass::Negative] {
                match (auc_pr(&list, class), brute_ap(&list, class)) {
                    (Ok(a), Ok(b)) if (a - b).abs() <= 1e-12 => {}
                    (Err(a), Err(b)) if a == b => {}
                    (a, b) => return Err(format!("{class:?} PR on {list:?}: {a:?} vs {b:?}")),
                }
            }
            lists += 1;
        }
    }
    Ok(format!("{lists} lists"))
}

/// EM objective over ten generated networks never goes up.
pub fn em_objective_non_increasing() -> Check {
    let mut sweeps = 0;
    for seed in 0..10u64 {
        let records = generate(&SynthConfig::small(40, 220, 500 + seed));
        let (net, _) = build_network(&records, &IngestConfig::full());
        let cfg = LatentConfig {
            max_iters: 6,
            tol: 0.0,
            ..LatentConfig::default()
        };
        let (_, report) = em_fit(&net, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        for w in report.objectives.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-12) {
                return Err(format!("seed {seed}: objective rose {:?}", report.objectives));
            }
        }
        sweeps += report.sweeps;
    }
    Ok(format!("10 networks, {sweeps} sweeps"))
}

/// Each triad rule's head is `Upvote` exactly when the product of its two
/// body signs is positive.
pub fn rule_table_is_balanced() -> Check {
    let rules = triadic_rules(1.0, Exponent::Squared);
    if rules.len() != 16 {
        return Err(format!("{} rules", rules.len()));
    }
    for r in &rules {
        let product: i32 = r
            .body
            .iter()
            .map(|l| match (l.predicate, l.negated) {
                (Predicate::Upvote, false) => 1,
                (Predicate::Downvote, false) => -1,
                _ => 0,
            })
            .product();
        let head = match (r.head.predicate, r.head.negated) {
            (Predicate::Upvote, false) => 1,
            (Predicate::Downvote, false) => -1,
            _ => 0,
        };
        if product == 0 || head != product {
            return Err(format!("rule {r} breaks the sign product"));
        }
        if literal_sign(&r.head).map(|s| s.value() as i32 * 2 - 1) != Some(head) {
            return Err(format!("rule {r}: literal_sign disagrees"));
        }
    }
    Ok("16 rules".into())
}

fn ingest_once(dump: &[u8], seed: u64) -> Vec<u8> {
    let parsed = parse_records(dump).expect("parse");
    let (net, stats) = build_network(&parsed.records, &IngestConfig::default());
    let cfg = IngestConfig {
        sample_nodes: Some(150),
        rng_seed: seed,
        ..IngestConfig::default()
    };
    let sample = sample_and_balance(&net, &cfg).expect("sample");
    let mut out = Vec::new();
    write_edge_list(&mut out, &sample).expect("edges");
    write_comments(&mut out, &sample).expect("comments");
    out.extend(serde_json::to_vec(&stats).expect("stats"));
    out.extend(serde_json::to_vec(sample.names()).expect("names"));
    out
}

/// Two ingest runs with the same seed give identical bytes; another seed
/// gives a different sample.
pub fn ingest_is_deterministic() -> Check {
    let mut dump = Vec::new();
    write_records(&mut dump, &generate(&SynthConfig::small(400, 3000, 9))).map_err(|e| e.to_string())?;
    let a = ingest_once(&dump, 5);
    let b = ingest_once(&dump, 5);
    if a != b {
        return Err("same seed, different bytes".into());
    }
    if a == ingest_once(&dump, 6) {
        return Err("different seeds gave identical samples".into());
    }
    Ok(format!("{} bytes identical across runs", a.len()))
}

pub fn property_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("6a MAP vs grid search", map_matches_grid()),
        ("6b MLE gradient vs finite differences", mle_gradient_matches_fd()),
        ("6b logistic gradient vs finite differences", logreg_gradient_matches_fd()),
        ("6c AUCs vs brute force", auc_matches_brute_force()),
        ("6d EM objective non-increasing", em_objective_non_increasing()),
        ("6e balance rule table", rule_table_is_balanced()),
        ("6f ingest determinism", ingest_is_deterministic()),
    ]
}
