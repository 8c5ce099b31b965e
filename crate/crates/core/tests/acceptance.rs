//! Acceptance suite. Prints one PASS / FAIL / BLOCKED line per criterion.
//!
//! The wiki-RfA dump is read from `WIKI_RFA_PATH` when set. Without it the
//! count check runs on a generated dump of the same size and reports
//! BLOCKED, and the model comparisons (criteria 2 to 5) run on a generated
//! corpus (see `signpred::synth`) with the fixed seeds below. Results on the
//! generated corpus say nothing about the real data, so their failures are
//! reported but only change the exit status with `ACCEPTANCE_STRICT=1`.
//! A failing property check (criterion 6) always exits non-zero.

mod common;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::time::{Duration, Instant};

use signpred::eval::{cross_validate, make_folds, EvalReport, Metrics, ModelSpec};
use signpred::ingest::{build_network, parse_records, sample_and_balance, write_records, IngestConfig};
use signpred::latent::LatentConfig;
use signpred::psl::LearnMethod;
use signpred::sentiment::SentimentConfig;
use signpred::synth::{generate, SynthConfig};
use signpred::triadic::TriadicConfig;
use signpred::SignedNetwork;

const CORPUS_SEED: u64 = 7;
const SAMPLE_SEED: u64 = 11;
const FOLD_SEED: u64 = 13;
const SAMPLE_NODES: usize = 1000;
const PAPER_NODES: usize = 10_835;
const PAPER_EDGES: usize = 159_388;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Blocked,
}

struct Line {
    id: &'static str,
    status: Status,
    detail: String,
    /// Failure changes the exit status even without strict mode.
    binding: bool,
}

impl Line {
    fn new(id: &'static str, ok: bool, detail: String) -> Self {
        Line {
            id,
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
            binding: true,
        }
    }

    fn informative(mut self, real_data: bool) -> Self {
        self.binding = real_data;
        self
    }
}

fn print(line: &Line) {
    let tag = match line.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Blocked => "BLOCKED",
    };
    println!("[{tag}] {}: {}", line.id, line.detail);
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(9)
}

fn criterion_1() -> Line {
    let id = "1 dataset counts";
    let (path, synthetic) = match std::env::var("WIKI_RFA_PATH") {
        Ok(p) => (std::path::PathBuf::from(p), None),
        Err(_) => {
            let dir = tempfile::tempdir().expect("temp dir");
            let path = dir.path().join("synthetic-rfa.txt");
            let records = generate(&SynthConfig {
                seed: CORPUS_SEED,
                ..SynthConfig::default()
            });
            write_records(BufWriter::new(File::create(&path).expect("create")), &records).expect("write");
            (path, Some(dir))
        }
    };
    let start = Instant::now();
    let parsed = match File::open(&path).map(BufReader::new).map_err(|e| e.to_string()).and_then(|r| parse_records(r).map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => return Line::new(id, false, format!("cannot read {}: {e}", path.display())),
    };
    let (_, stats) = build_network(&parsed.records, &IngestConfig::full());
    let secs = start.elapsed().as_secs_f64();
    let raw_match = stats.nodes_raw == PAPER_NODES && stats.edges_raw == PAPER_EDGES;
    let signed_match = stats.nodes_signed == PAPER_NODES && stats.edges_signed == PAPER_EDGES;
    let detail = format!(
        "raw stage {} nodes / {} edges, after neutral drop {} nodes / {} edges, {} record errors, {secs:.2}s",
        stats.nodes_raw, stats.edges_raw, stats.nodes_signed, stats.edges_signed, parsed.errors.len()
    );
    match synthetic {
        None => Line::new(id, (raw_match || signed_match) && secs < 60.0, detail),
        Some(_dir) => Line {
            id,
            status: if raw_match && secs < 60.0 { Status::Blocked } else { Status::Fail },
            detail: format!(
                "wiki-RfA dump not available (set WIKI_RFA_PATH); generated dump of the same size: {detail}"
            ),
            binding: true,
        },
    }
}

/// The real dump when `WIKI_RFA_PATH` is set, else the generated corpus.
fn corpus() -> (SignedNetwork, String) {
    if let Ok(p) = std::env::var("WIKI_RFA_PATH") {
        let f = File::open(&p).expect("WIKI_RFA_PATH readable");
        let parsed = parse_records(BufReader::new(f)).expect("dump parses");
        return (build_network(&parsed.records, &IngestConfig::default()).0, format!("wiki-RfA from {p}"));
    }
    let records = generate(&SynthConfig {
        seed: CORPUS_SEED,
        ..SynthConfig::default()
    });
    (
        build_network(&records, &IngestConfig::default()).0,
        format!("generated, seed {CORPUS_SEED}"),
    )
}

fn sample(full: &SignedNetwork, keep: f64) -> SignedNetwork {
    let cfg = IngestConfig {
        sample_nodes: Some(SAMPLE_NODES),
        positive_keep_fraction: keep,
        rng_seed: SAMPLE_SEED,
        drop_neutral: true,
    };
    sample_and_balance(full, &cfg).expect("sample")
}

fn run(spec: &ModelSpec, net: &SignedNetwork, folds: usize) -> EvalReport {
    let plan = make_folds(net, folds, FOLD_SEED).expect("folds");
    cross_validate(spec, net, &plan, 0.5, jobs())
}

fn mean(r: &EvalReport) -> Metrics {
    r.mean.expect("at least one fold succeeded")
}

fn describe(net: &SignedNetwork) -> String {
    format!(
        "{} nodes, {} edges ({} negative)",
        net.node_count(),
        net.edge_count(),
        net.negative_count()
    )
}

fn triadic_mle() -> ModelSpec {
    ModelSpec::Triadic(TriadicConfig::default())
}

struct Sweep {
    neg_pr: Vec<(usize, f64)>,
    reports: Vec<EvalReport>,
    elapsed: Duration,
}

fn sweep(net: &SignedNetwork) -> Sweep {
    let start = Instant::now();
    let mut neg_pr = Vec::new();
    let mut reports = Vec::new();
    for n in [3, 6, 9] {
        let r = run(&triadic_mle(), net, n);
        neg_pr.push((n, mean(&r).auc_neg_pr));
        reports.push(r);
    }
    Sweep {
        neg_pr,
        reports,
        elapsed: start.elapsed(),
    }
}

fn slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| (p.0 - 1) as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| ((p.0 - 1) as f64 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| ((p.0 - 1) as f64 - mx).powi(2)).sum();
    sxy / sxx
}

fn fmt_sweep(s: &Sweep) -> String {
    s.neg_pr
        .iter()
        .map(|(n, v)| format!("N={n}: {v:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut lines = Vec::new();
    let l1 = criterion_1();
    print(&l1);
    lines.push(l1);

    let real = std::env::var_os("WIKI_RFA_PATH").is_some();
    let (full, origin) = corpus();
    let unbalanced = sample(&full, 1.0);
    let balanced = sample(&full, 0.25);
    println!("       corpus: {origin}; {}", describe(&full));
    println!("       unbalanced sample (seed {SAMPLE_SEED}): {}", describe(&unbalanced));
    println!("       balanced sample (seed {SAMPLE_SEED}, keep 0.25): {}", describe(&balanced));

    let s2 = sweep(&unbalanced);
    let m2: f64 = s2.neg_pr.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let ok2 = s2.neg_pr.iter().all(|p| p.1 >= 0.3)
        && slope(&s2.neg_pr) > 0.0
        && (m2 - 0.4).abs() <= 0.1
        && s2.elapsed.as_secs() < 1800;
    let l2 = Line::new(
        "2 triadic MLE negPR (unbalanced)",
        ok2,
        format!(
            "{}; mean {m2:.3}, slope per evidence-ratio unit {:.4}, {:.0}s",
            fmt_sweep(&s2),
            slope(&s2.neg_pr),
            s2.elapsed.as_secs_f64()
        ),
    );
    let l2 = l2.informative(real);
    print(&l2);
    lines.push(l2);

    let s3 = sweep(&balanced);
    let m3: f64 = s3.neg_pr.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let l3 = Line::new(
        "3 balanced sample improves negPR",
        m3 > m2,
        format!("{}; mean {m3:.3} vs unbalanced {m2:.3}", fmt_sweep(&s3)),
    );
    let l3 = l3.informative(real);
    print(&l3);
    lines.push(l3);

    let tri = &s3.reports[2];
    let sent = run(&ModelSpec::Sentiment(SentimentConfig::default()), &balanced, 9);
    let (mt, ms) = (mean(tri), mean(&sent));
    let l4 = Line::new(
        "4 sentiment beats triadic",
        ms.auc_neg_pr > mt.auc_neg_pr && ms.auc_roc > mt.auc_roc,
        format!(
            "balanced sample, N=9: negPR {:.3} vs {:.3}, ROC {:.3} vs {:.3}",
            ms.auc_neg_pr, mt.auc_neg_pr, ms.auc_roc, mt.auc_roc
        ),
    );
    let l4 = l4.informative(real);
    print(&l4);
    lines.push(l4);

    let latent = |method| {
        let mut cfg = LatentConfig::default();
        cfg.triadic.learn.method = method;
        ModelSpec::Latent(cfg)
    };
    let start = Instant::now();
    let mle = run(&latent(LearnMethod::Mle), &balanced, 3);
    let mple = run(&latent(LearnMethod::Mple), &balanced, 3);
    let (a, b) = (mean(&mple).auc_roc, mean(&mle).auc_roc);
    let l5 = Line::new(
        "5 latent MPLE >= MLE on ROC",
        a >= b,
        format!(
            "balanced sample, N=3: MPLE {a:.3} vs MLE {b:.3}, {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    );
    let l5 = l5.informative(real);
    print(&l5);
    lines.push(l5);

    let start = Instant::now();
    for (id, res) in common::property_suite() {
        let l = Line::new(id, res.is_ok(), res.unwrap_or_else(|e| e));
        print(&l);
        lines.push(l);
    }
    let secs = start.elapsed().as_secs_f64();
    let l6 = Line::new("6 property suite under 5 minutes", secs < 300.0, format!("{secs:.1}s"));
    print(&l6);
    lines.push(l6);

    let failed = lines.iter().filter(|l| l.status == Status::Fail).count();
    let blocked = lines.iter().filter(|l| l.status == Status::Blocked).count();
    println!(
        "acceptance: {} passed, {failed} failed, {blocked} blocked",
        lines.len() - failed - blocked
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if lines.iter().any(|l| l.status == Status::Fail && (l.binding || strict)) {
        std::process::exit(1);
    }
    if failed > 0 {
        println!("acceptance: failures above are on generated data; set ACCEPTANCE_STRICT=1 to make them fatal");
    }
}
