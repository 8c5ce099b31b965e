use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signpred::eval::{cross_validate, make_folds, ModelSpec};
use signpred::latent::{e_step, em_fit, predict_with_latent, LatentConfig, LatentModel};
use signpred::psl::{map_inference, AtomKey, Exponent, GroundLiteral, GroundRule, HlMrf, LatentValues, SolverConfig};
use signpred::sentiment::{fuse_priors, FusionConfig};
use signpred::triadic::{TriadicConfig, TriadicModel};
use signpred::{NodeId, Sign, SignedNetwork};

fn n(i: u32) -> NodeId {
    NodeId(i)
}

fn net(edges: &[(u32, u32, Sign)], nodes: usize) -> SignedNetwork {
    let mut g = SignedNetwork::with_nodes(nodes);
    for &(a, b, s) in edges {
        g.add_edge(n(a), n(b), s, None).unwrap();
    }
    g
}

/// Two factions; friendly inside, hostile across, with a share of flipped
/// signs.
fn planted_balance(nodes: u32, edges: usize, noise: f64, seed: u64) -> SignedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side: Vec<bool> = (0..nodes).map(|_| rng.gen_bool(0.5)).collect();
    let mut g = SignedNetwork::with_nodes(nodes as usize);
    while g.edge_count() < edges {
        let (a, b) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
        if a == b || g.has_edge(n(a), n(b)) {
            continue;
        }
        let friendly = (side[a as usize] == side[b as usize]) != rng.gen_bool(noise);
        let sign = if friendly { Sign::Positive } else { Sign::Negative };
        g.add_edge(n(a), n(b), sign, None).unwrap();
    }
    g
}

#[test]
fn triad_rules_recover_planted_balance() {
    let g = planted_balance(200, 3000, 0.1, 5);
    let plan = make_folds(&g, 3, 1).unwrap();
    let report = cross_validate(&ModelSpec::Triadic(TriadicConfig::default()), &g, &plan, 0.5, 1);
    assert!(report.complete);
    let roc = report.mean.unwrap().auc_roc;
    assert!(roc > 0.75, "ROC {roc}");
}

#[test]
fn neutral_fusion_changes_nothing() {
    let g = planted_balance(30, 150, 0.1, 9);
    let pairs: Vec<_> = g.signed_pairs().take(20).map(|(a, b, _)| (a, b)).collect();
    let evidence = g.without_pairs(&pairs);
    // the fused objective is shifted by a constant, so converge fully
    // rather than on a relative-improvement rule
    let mut base = TriadicConfig::default();
    base.learn.solver = SolverConfig {
        tol: 0.0,
        patience: 50,
        max_sweeps: 100_000,
        ..SolverConfig::default()
    };
    let plain = TriadicModel::untrained(&base);
    let fused = TriadicModel::untrained(&TriadicConfig {
        fusion: Some(FusionConfig::default()),
        ..base.clone()
    });
    let a = plain.predict(&evidence, &pairs, None).unwrap();
    let b = fused.predict(&evidence, &pairs, Some(&vec![0.5; pairs.len()])).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
}

fn single_edge_cost(p: f64, pull_down: Option<f64>) -> f64 {
    let mut mrf = HlMrf::default();
    let up = mrf.add_free_atom(AtomKey::up(n(0), n(1)));
    if let Some(w) = pull_down {
        let s = mrf.add_slot("pull_down", w);
        mrf.push_ground_rule(GroundRule {
            slot: s,
            scale: 1.0,
            exponent: Exponent::Squared,
            body: vec![GroundLiteral { atom: up, negated: false }],
            head: None,
        })
        .unwrap();
    }
    let pos = mrf.add_slot("lambda_1", 1.0);
    let neg = mrf.add_slot("lambda_0", 1.0);
    assert_eq!(fuse_priors(&mut mrf, &[((n(0), n(1)), p)], pos, neg).unwrap(), 1);
    assert!(fuse_priors(&mut mrf.clone(), &[((n(0), n(1)), 1.5)], pos, neg).is_err());
    let cfg = SolverConfig {
        tol: 0.0,
        patience: 50,
        ..SolverConfig::default()
    };
    map_inference(&mrf, &mrf.default_weights(), &cfg).unwrap().assignment.values[0]
}

#[test]
fn edge_cost_examples() {
    assert!((single_edge_cost(1.0, None) - 1.0).abs() < 1e-9);
    let x = single_edge_cost(0.9, Some(1.0));
    let grid = (0..=1000)
        .map(|i| i as f64 / 1000.0)
        .min_by(|a, b| {
            let f = |x: f64| 0.1 * x + 0.9 * (1.0 - x) + x * x;
            f(*a).total_cmp(&f(*b))
        })
        .unwrap();
    assert_eq!(grid, 0.4);
    assert!((x - 0.4).abs() < 1e-6, "{x}");
}

#[test]
fn zero_latent_weights_reduce_to_triads() {
    let g = planted_balance(30, 150, 0.1, 3);
    let pairs: Vec<_> = g.signed_pairs().take(20).map(|(a, b, _)| (a, b)).collect();
    let evidence = g.without_pairs(&pairs);
    let cfg = LatentConfig::default();
    let mut lm = LatentModel::untrained(&evidence, &cfg);
    for s in lm.latent_slots() {
        lm.model.weights[s] = 0.0;
    }
    let half = LatentValues::uniform(g.node_count(), 0.5);
    let with_latent = predict_with_latent(&lm.model, &half, &evidence, &pairs).unwrap();
    let plain = TriadicModel::untrained(&cfg.triadic).predict(&evidence, &pairs, None).unwrap();
    for (x, y) in with_latent.iter().zip(&plain) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn liked_candidate_ends_up_more_favorable() {
    let g = net(
        &[
            (0, 1, Sign::Positive),
            (2, 1, Sign::Positive),
            (0, 3, Sign::Negative),
            (2, 3, Sign::Negative),
        ],
        5,
    );
    let lm = LatentModel::untrained(&g, &LatentConfig::default());
    let z = e_step(&lm.model, &g, &LatentValues::uniform(5, 0.5)).unwrap();
    assert!(z.favorable[1] >= z.favorable[3], "{:?}", z.favorable);
    assert!(z.favorable[1] > z.favorable[3]);
    // node 4 has no edges, so nothing grounds over it
    assert_eq!((z.active[4], z.favorable[4]), (0.5, 0.5));
    for v in z.active.iter().chain(&z.favorable) {
        assert!((0.0..=1.0).contains(v));
    }
}

#[test]
fn raising_favorability_never_lowers_the_score() {
    let g = net(&[(0, 1, Sign::Positive), (1, 2, Sign::Negative), (0, 2, Sign::Positive)], 3);
    let lm = LatentModel::untrained(&g, &LatentConfig::default());
    let pair = [(n(0), n(2))];
    let evidence = g.without_pairs(&pair);
    let mut z = LatentValues::uniform(3, 0.5);
    let mut last = f64::NEG_INFINITY;
    for step in 0..=10 {
        z.favorable[2] = step as f64 / 10.0;
        let s = predict_with_latent(&lm.model, &z, &evidence, &pair).unwrap()[0];
        assert!(s >= last - 1e-9, "{s} after {last}");
        last = s;
    }
}

#[test]
fn em_with_no_iterations_is_the_identity() {
    let g = planted_balance(20, 80, 0.1, 4);
    let cfg = LatentConfig {
        max_iters: 0,
        ..LatentConfig::default()
    };
    let (fitted, report) = em_fit(&g, &cfg).unwrap();
    assert_eq!(fitted, LatentModel::untrained(&g, &cfg));
    assert_eq!(report.sweeps, 0);
    assert!(em_fit(&SignedNetwork::with_nodes(1), &LatentConfig::default()).is_err());
}

#[test]
fn em_keeps_latent_values_in_range() {
    let g = planted_balance(40, 250, 0.1, 8);
    let cfg = LatentConfig {
        max_iters: 4,
        ..LatentConfig::default()
    };
    let (fitted, report) = em_fit(&g, &cfg).unwrap();
    assert!(report.sweeps >= 1);
    for v in fitted.latent.active.iter().chain(&fitted.latent.favorable) {
        assert!((0.0..=1.0).contains(v));
    }
    for w in report.objectives.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", report.objectives);
    }
    let coupling = &fitted.model.coupling_slots;
    for &s in coupling {
        assert_eq!(fitted.model.weights[s as usize], cfg.triadic.coupling_weight);
    }
}
