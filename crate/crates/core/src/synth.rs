//! Seeded generator for vote dumps in the wiki-RfA record format.
//!
//! Used for tests and for exercising the pipeline where the real dump is not
//! available. The generative story: a minority of users stand as
//! candidates; voters and candidates have heavy-tailed activity and
//! popularity; each user belongs to one of a few factions. The log-odds of
//! an upvote add a candidate merit term, a voter leniency term and a
//! same-faction term (which produces balanced triads), with the intercept
//! solved so that the expected share of upvotes hits a target. Comments mix
//! filler words with polarity words that agree with the vote most of the
//! time.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::RfaRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    /// Distinct ordered (voter, candidate) pairs.
    pub pairs: usize,
    pub candidate_fraction: f64,
    pub faction_shares: Vec<f64>,
    pub neutral_rate: f64,
    /// Target share of upvotes among non-neutral votes.
    pub positive_rate: f64,
    pub merit_effect: f64,
    pub leniency_effect: f64,
    pub faction_effect: f64,
    /// Log-scale spread of voter activity and candidate popularity.
    pub activity_sigma: f64,
    pub empty_comment_rate: f64,
    /// Chance that a comment word is a polarity word.
    pub polarity_word_rate: f64,
    /// Chance that a polarity word agrees with the vote.
    pub polarity_agreement: f64,
    pub mean_comment_words: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 10_835,
            pairs: 159_388,
            candidate_fraction: 0.35,
            faction_shares: vec![0.5, 0.3, 0.2],
            neutral_rate: 0.05,
            positive_rate: 0.78,
            merit_effect: 1.2,
            leniency_effect: 0.8,
            faction_effect: 1.0,
            activity_sigma: 1.5,
            empty_comment_rate: 0.1,
            polarity_word_rate: 0.2,
            polarity_agreement: 0.8,
            mean_comment_words: 8.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same generative settings at a smaller size.
    pub fn small(users: usize, pairs: usize, seed: u64) -> Self {
        SynthConfig {
            users,
            pairs,
            seed,
            ..Default::default()
        }
    }
}

const POSITIVE_WORDS: &[&str] = &[
    "support", "strong", "good", "excellent", "trustworthy", "experienced", "helpful", "great",
    "clueful", "qualified", "solid", "reliable", "dedicated", "friendly", "definitely", "yes",
    "asset", "competent", "polite", "fine",
];

const NEGATIVE_WORDS: &[&str] = &[
    "oppose", "concerns", "inexperienced", "weak", "incivility", "problems", "unconvinced",
    "worried", "soon", "immature", "hostile", "sorry", "lacking", "unfortunately", "poor",
    "dishonest", "questionable", "temperament", "rude", "no",
];

const NEUTRAL_WORDS: &[&str] = &["neutral", "unsure", "undecided", "abstain", "torn"];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ra", "su", "ti", "vo", "an", "el", "or", "us", "ba", "de", "fi",
    "go", "ha", "ju", "pe", "qu", "ri", "sa", "te", "wi", "xa", "yo", "ze",
];

fn pseudo_word(mut k: usize, min_syllables: usize) -> String {
    let mut s = String::new();
    let mut n = 0;
    loop {
        s.push_str(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
        n += 1;
        if k == 0 && n >= min_syllables {
            return s;
        }
    }
}

fn user_name(i: usize) -> String {
    let mut name = pseudo_word(i * 7919 % 50_000, 2);
    if let Some(c) = name.get_mut(0..1) {
        c.make_ascii_uppercase();
    }
    format!("{name} {i}")
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Generates the records. Every user appears in at least one record and
/// `pairs` distinct ordered pairs are produced (requires `pairs ≥ users`
/// and enough room among voter–candidate pairs).
pub fn generate(cfg: &SynthConfig) -> Vec<RfaRecord> {
    assert!(cfg.users >= 3, "need at least three users");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.users;
    let n_cand = ((n as f64 * cfg.candidate_fraction).round() as usize).clamp(2, n);
    assert!(
        cfg.pairs >= n && cfg.pairs <= n_cand * (n - 1) / 2,
        "pair count out of range for {n} users"
    );

    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let candidates: Vec<usize> = ids[..n_cand].to_vec();

    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let spread = LogNormal::new(0.0, cfg.activity_sigma).expect("valid lognormal");
    let faction_pick = WeightedIndex::new(&cfg.faction_shares).expect("faction shares");
    let merit: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let leniency: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let faction: Vec<usize> = (0..n).map(|_| faction_pick.sample(&mut rng)).collect();
    let activity: Vec<f64> = (0..n).map(|_| spread.sample(&mut rng)).collect();
    let popularity: Vec<f64> = candidates.iter().map(|_| spread.sample(&mut rng)).collect();
    let voter_pick = WeightedIndex::new(&activity).expect("activity weights");
    let cand_pick = WeightedIndex::new(&popularity).expect("popularity weights");

    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(cfg.pairs);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(cfg.pairs);
    fn push(
        s: usize,
        t: usize,
        seen: &mut HashSet<(usize, usize)>,
        pairs: &mut Vec<(usize, usize)>,
    ) -> bool {
        let fresh = s != t && seen.insert((s, t));
        if fresh {
            pairs.push((s, t));
        }
        fresh
    }
    // everyone votes at least once, every candidate is voted on at least once
    for v in 0..n {
        while !push(v, candidates[cand_pick.sample(&mut rng)], &mut seen, &mut pairs) {}
    }
    let mut voted_on = vec![false; n];
    for &(_, t) in &pairs {
        voted_on[t] = true;
    }
    for &c in &candidates {
        if !voted_on[c] {
            while !push(voter_pick.sample(&mut rng), c, &mut seen, &mut pairs) {}
        }
    }
    while pairs.len() < cfg.pairs {
        let s = voter_pick.sample(&mut rng);
        let t = candidates[cand_pick.sample(&mut rng)];
        push(s, t, &mut seen, &mut pairs);
    }
    pairs.truncate(cfg.pairs);
    pairs.shuffle(&mut rng);

    let logit_wo_intercept: Vec<f64> = pairs
        .iter()
        .map(|&(s, t)| {
            let same = if faction[s] == faction[t] { 1.0 } else { -1.0 };
            cfg.merit_effect * merit[t] + cfg.leniency_effect * leniency[s] + cfg.faction_effect * same
        })
        .collect();
    let mean_pos = |b: f64| {
        logit_wo_intercept.iter().map(|z| sigmoid(b + z)).sum::<f64>() / pairs.len() as f64
    };
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_pos(mid) < cfg.positive_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let intercept = 0.5 * (lo + hi);

    let filler: Vec<String> = (0..3000).map(|k| pseudo_word(k, 2)).collect();
    let filler_weights: Vec<f64> = (1..=filler.len()).map(|r| 1.0 / r as f64).collect();
    let filler_pick = WeightedIndex::new(&filler_weights).expect("filler weights");
    let length = Geometric::new(1.0 / cfg.mean_comment_words.max(1.0)).expect("comment length");

    let votes: Vec<i32> = logit_wo_intercept
        .iter()
        .map(|z| {
            if rng.gen::<f64>() < cfg.neutral_rate {
                0
            } else if rng.gen::<f64>() < sigmoid(intercept + z) {
                1
            } else {
                -1
            }
        })
        .collect();

    // candidate outcome: promoted when at least 75% of signed votes are up
    let mut tally = vec![(0usize, 0usize); n];
    for (&(_, t), &v) in pairs.iter().zip(&votes) {
        match v {
            1 => tally[t].0 += 1,
            -1 => tally[t].1 += 1,
            _ => {}
        }
    }
    let year_of: Vec<i32> = (0..n).map(|_| rng.gen_range(2003..=2013)).collect();
    const MONTHS: [&str; 12] = [
        "January", "February", "March", "April", "May", "June", "July", "August", "September",
        "October", "November", "December",
    ];

    pairs
        .iter()
        .zip(&votes)
        .map(|(&(s, t), &vot)| {
            let txt = if rng.gen::<f64>() < cfg.empty_comment_rate {
                String::new()
            } else {
                let len = 1 + length.sample(&mut rng) as usize;
                let mut words = Vec::with_capacity(len);
                for _ in 0..len {
                    if rng.gen::<f64>() < cfg.polarity_word_rate {
                        let agree = rng.gen::<f64>() < cfg.polarity_agreement;
                        let list = match (vot, agree) {
                            (0, _) => NEUTRAL_WORDS,
                            (1, true) | (-1, false) => POSITIVE_WORDS,
                            _ => NEGATIVE_WORDS,
                        };
                        words.push(list.choose(&mut rng).expect("non-empty").to_string());
                    } else {
                        words.push(filler[filler_pick.sample(&mut rng)].clone());
                    }
                }
                let mut txt = words.join(" ");
                if let Some(c) = txt.get_mut(0..1) {
                    c.make_ascii_uppercase();
                }
                txt.push('.');
                txt
            };
            let (up, down) = tally[t];
            let res = if up * 4 >= (up + down) * 3 { 1 } else { -1 };
            let yea = year_of[t];
            let dat = format!(
                "{:02}:{:02}, {} {} {}",
                rng.gen_range(0..24),
                rng.gen_range(0..60),
                rng.gen_range(1..=28),
                MONTHS[rng.gen_range(0..12)],
                yea
            );
            RfaRecord {
                src: user_name(s),
                tgt: user_name(t),
                vot,
                res: Some(res),
                yea: Some(yea),
                dat,
                txt,
            }
        })
        .collect()
}
