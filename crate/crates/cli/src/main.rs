//! `signpred`: ingest the vote dump, dump rule sets, train, predict and
//! cross-validate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model or numeric
//! failure (including any failed evaluation fold).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use signpred::eval::{
    cross_validate, holdout_plan, make_folds, EvalReport, ModelSpec, RelevantClass,
};
use signpred::ingest::{
    assemble_network, build_network, network_stats, parse_records, read_comments,
    read_edge_list, sample_and_balance, write_comments, write_edge_list, write_records,
    DatasetSidecar, IngestConfig,
};
use signpred::latent::{em_fit, latent_rules, write_latent_csv, LatentConfig, LatentModel};
use signpred::psl::{parse_rules, write_rules, Exponent, LearnConfig, LearnMethod, Rule};
use signpred::sentiment::{FusionConfig, LogRegConfig, SentimentConfig, SentimentModel};
use signpred::synth::{generate, SynthConfig};
use signpred::triadic::{hard_label, triadic_rules, TriadicConfig, TriadicModel};
use signpred::{NodeId, SignedNetwork};

const EDGES_FILE: &str = "edges.tsv";
const SIDECAR_FILE: &str = "dataset.json";
const COMMENTS_FILE: &str = "comments.jsonl";

#[derive(Parser)]
#[command(name = "signpred", version, about = "Edge sign prediction on signed networks")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat `key = value` file; each key is a long flag of the subcommand.
    /// Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a wiki-RfA dump and export the (sampled, rebalanced) network.
    Ingest(IngestArgs),
    /// Print a rule set in the rule-file format.
    Rules(RulesArgs),
    /// Fit a model on a whole dataset and save it.
    Train(TrainArgs),
    /// Score explicit pairs with a saved model.
    Predict(PredictArgs),
    /// Cross-validate one model or all of them on one fold plan.
    Evaluate(EvaluateArgs),
    /// Write a generated dump in the wiki-RfA format.
    Synth(SynthArgs),
}

#[derive(Args)]
#[command(args_override_self = true)]
struct IngestArgs {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    sample_nodes: Option<usize>,
    /// Share of positive edges kept; negatives are always kept.
    #[arg(long, default_value_t = 0.25)]
    keep_fraction: f64,
    /// Keep neutral votes as (non-negative) edges instead of dropping them.
    #[arg(long)]
    keep_neutral: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Triadic,
    Latent,
    Sentiment,
    Fused,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Triadic => "triadic",
            ModelKind::Latent => "latent",
            ModelKind::Sentiment => "sentiment",
            ModelKind::Fused => "fused",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalModel {
    Triadic,
    Latent,
    Sentiment,
    Fused,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Learn {
    Mle,
    Mple,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct RulesArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Triadic)]
    model: ModelKind,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    exponent: u8,
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Learn::Mle)]
    learn: Learn,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    /// Distance exponent of the triad and latent rules.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    exponent: u8,
    /// Share of training edges hidden while learning weights.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    target_fraction: f64,
    /// Replace the sixteen triad rules with the rules of this file.
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    em_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_0: f64,
    #[arg(long, default_value_t = 2)]
    min_df: u32,
    #[arg(long, default_value_t = 500)]
    logreg_epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: ModelKind,
    #[command(flatten)]
    model_args: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for model.json, weights.json (and latent.csv).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// A model.json written by `train`.
    #[arg(long, value_name = "FILE")]
    model_file: PathBuf,
    /// One pair per line, `src<TAB>tgt`, as node names or numeric IDs.
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: EvalModel,
    #[command(flatten)]
    model_args: ModelArgs,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Single stratified split keeping this share for training, instead of
    /// folds.
    #[arg(long, conflicts_with = "folds")]
    holdout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_override_self = true)]
struct SynthArgs {
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 10_835)]
    users: usize,
    #[arg(long, default_value_t = 159_388)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Model(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Model(_) => 3,
        }
    }
}

type Outcome<T> = Result<T, Failure>;

trait Classify<T> {
    fn data(self, what: impl FnOnce() -> String) -> Outcome<T>;
    fn model(self, what: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self, what: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into().context(what())))
    }

    fn model(self, what: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Model(e.into().context(what())))
    }
}

/// Reads `key = value` lines into flag tokens. Blank lines and `#`
/// comments are skipped; `true`/`false` switch boolean flags.
fn config_tokens(text: &str) -> Outcome<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Failure::Usage(format!("config line {}: expected key = value", i + 1)));
        };
        let key = k.trim().replace('_', "-");
        let value = v.trim();
        if key.is_empty() {
            return Err(Failure::Usage(format!("config line {}: empty key", i + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

/// Splices the config file's flags in right after the subcommand so that
/// later command-line flags override them.
fn expand_config(args: Vec<OsString>) -> Outcome<Vec<OsString>> {
    let mut path: Option<PathBuf> = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            match it.next() {
                Some(p) => path = Some(p.into()),
                None => return Err(Failure::Usage("--config needs a file".into())),
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).data(|| format!("reading config {}", path.display()))?;
    let tokens = config_tokens(&text)?;
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(rest.len());
    rest.splice(sub..sub, tokens);
    Ok(rest)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Outcome<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let ctx = || format!("writing {}", path.display());
    fs::create_dir_all(&dir).data(ctx)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).data(ctx)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w).data(ctx)?;
        w.flush().data(ctx)?;
    }
    tmp.persist(path).map_err(|e| e.error).data(ctx)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn load_dataset(dir: &Path) -> Outcome<(SignedNetwork, DatasetSidecar)> {
    let open = |name: &str| {
        let p = dir.join(name);
        File::open(&p).map(BufReader::new).data(|| format!("opening {}", p.display()))
    };
    let sidecar: DatasetSidecar =
        serde_json::from_reader(open(SIDECAR_FILE)?).data(|| format!("reading {SIDECAR_FILE}"))?;
    let edges = read_edge_list(open(EDGES_FILE)?).data(|| format!("reading {EDGES_FILE}"))?;
    let comments = match dir.join(COMMENTS_FILE).exists() {
        true => read_comments(open(COMMENTS_FILE)?).data(|| format!("reading {COMMENTS_FILE}"))?,
        false => Vec::new(),
    };
    let net = assemble_network(sidecar.name_map.clone(), &edges, &comments)
        .data(|| format!("assembling dataset from {}", dir.display()))?;
    Ok((net, sidecar))
}

fn cmd_ingest(a: &IngestArgs) -> Outcome<()> {
    let input = File::open(&a.input).data(|| format!("opening {}", a.input.display()))?;
    let parsed = parse_records(BufReader::new(input)).data(|| format!("parsing {}", a.input.display()))?;
    for e in &parsed.errors {
        log::warn!("record at line {} skipped: {}", e.line, e.message);
    }
    let cfg = IngestConfig {
        sample_nodes: a.sample_nodes,
        positive_keep_fraction: a.keep_fraction,
        rng_seed: a.seed,
        drop_neutral: !a.keep_neutral,
    };
    let (net, mut stats) = build_network(&parsed.records, &cfg);
    stats.record_errors = parsed.errors.len();
    let exported = sample_and_balance(&net, &cfg).data(|| "sampling".to_string())?;
    let sidecar = DatasetSidecar {
        name_map: exported.names().clone(),
        stats: stats.clone(),
        config: cfg,
        exported: network_stats(&exported),
    };
    write_atomic(&a.out.join(EDGES_FILE), |w| write_edge_list(w, &exported))?;
    write_atomic(&a.out.join(COMMENTS_FILE), |w| write_comments(w, &exported))?;
    write_json(&a.out.join(SIDECAR_FILE), &sidecar)?;
    let summary = serde_json::json!({ "stats": stats, "exported": sidecar.exported });
    println!("{}", serde_json::to_string_pretty(&summary).expect("plain data serializes"));
    Ok(())
}

fn exponent(p: u8) -> Exponent {
    if p == 1 {
        Exponent::Linear
    } else {
        Exponent::Squared
    }
}

fn model_rules(kind: ModelKind, weight: f64, p: u8) -> Vec<Rule> {
    let cfg = TriadicConfig {
        rule_weight: weight,
        exponent: exponent(p),
        ..TriadicConfig::default()
    };
    let mut base = triadic_rules(weight, exponent(p));
    if kind == ModelKind::Latent {
        base.extend(latent_rules(weight, exponent(p)));
    }
    TriadicModel::from_rules(base, &cfg).rules
}

fn cmd_rules(a: &RulesArgs) -> Outcome<()> {
    if a.model == ModelKind::Sentiment {
        return Err(Failure::Usage("the sentiment model has no rules".into()));
    }
    let text = write_rules(&model_rules(a.model, a.weight, a.exponent));
    match &a.out {
        Some(p) => write_atomic(p, |w| w.write_all(text.as_bytes())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn triadic_config(m: &ModelArgs, seed: u64, fused: bool) -> TriadicConfig {
    TriadicConfig {
        exponent: exponent(m.exponent),
        learn: LearnConfig {
            method: match m.learn {
                Learn::Mle => LearnMethod::Mle,
                Learn::Mple => LearnMethod::Mple,
            },
            epochs: m.epochs,
            learning_rate: m.learning_rate,
            ..LearnConfig::default()
        },
        target_fraction: m.target_fraction,
        seed,
        fusion: fused.then_some(FusionConfig {
            lambda_1: m.lambda_1,
            lambda_0: m.lambda_0,
        }),
        ..TriadicConfig::default()
    }
}

fn sentiment_config(m: &ModelArgs) -> SentimentConfig {
    SentimentConfig {
        min_df: m.min_df,
        logreg: LogRegConfig {
            epochs: m.logreg_epochs,
            l2: m.l2,
            ..LogRegConfig::default()
        },
    }
}

fn custom_rules(m: &ModelArgs) -> Outcome<Option<Vec<Rule>>> {
    let Some(p) = &m.rules else { return Ok(None) };
    let text = fs::read_to_string(p).data(|| format!("reading {}", p.display()))?;
    let rules = parse_rules(&text).data(|| format!("parsing {}", p.display()))?;
    Ok(Some(rules))
}

/// A trained model as stored by `train`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Triadic { model: TriadicModel },
    Latent { model: LatentModel },
    Sentiment { model: SentimentModel },
    Fused { model: TriadicModel, sentiment: SentimentModel },
}

fn weight_map(m: &TriadicModel) -> serde_json::Map<String, serde_json::Value> {
    let mut map: serde_json::Map<String, serde_json::Value> = m
        .rules
        .iter()
        .zip(&m.weights)
        .map(|(r, &w)| (r.id.clone(), w.into()))
        .collect();
    if let Some((l1, l0)) = m.fusion_weights() {
        map.insert("lambda_1".into(), l1.into());
        map.insert("lambda_0".into(), l0.into());
    }
    map
}

fn cmd_train(a: &TrainArgs) -> Outcome<()> {
    let (net, _) = load_dataset(&a.data)?;
    let m = &a.model_args;
    let fail = || format!("training the {} model", a.model.name());
    let rules = custom_rules(m)?;
    let file = match a.model {
        ModelKind::Triadic => {
            let cfg = triadic_config(m, a.seed, false);
            let model = match rules {
                Some(r) => {
                    let mut model = TriadicModel::from_rules(r, &cfg);
                    let targets = signpred::psl::internal_split(&net, cfg.target_fraction, cfg.seed);
                    model.learn(&net, &targets, None, &cfg.learn).model(fail)?;
                    model
                }
                None => TriadicModel::fit(&net, &cfg).model(fail)?.0,
            };
            ModelFile::Triadic { model }
        }
        ModelKind::Latent => {
            let cfg = LatentConfig {
                triadic: triadic_config(m, a.seed, false),
                latent_exponent: exponent(m.exponent),
                max_iters: m.em_iters,
                ..LatentConfig::default()
            };
            let (model, report) = em_fit(&net, &cfg).model(fail)?;
            log::info!("EM ran {} sweeps, converged: {}", report.sweeps, report.converged);
            ModelFile::Latent { model }
        }
        ModelKind::Sentiment => ModelFile::Sentiment {
            model: SentimentModel::train(&net, &sentiment_config(m)).model(fail)?,
        },
        ModelKind::Fused => {
            let cfg = triadic_config(m, a.seed, true);
            let targets = signpred::psl::internal_split(&net, cfg.target_fraction, cfg.seed);
            let evidence = net.without_pairs(&targets);
            let inner = SentimentModel::train(&evidence, &sentiment_config(m)).model(fail)?;
            let priors = inner.score_pairs(&net, &targets);
            let mut model = TriadicModel::untrained(&cfg);
            model.learn(&net, &targets, Some(&priors), &cfg.learn).model(fail)?;
            let sentiment = SentimentModel::train(&net, &sentiment_config(m)).model(fail)?;
            ModelFile::Fused { model, sentiment }
        }
    };
    write_json(&a.out.join("model.json"), &file)?;
    match &file {
        ModelFile::Triadic { model } | ModelFile::Fused { model, .. } => {
            write_json(&a.out.join("weights.json"), &weight_map(model))?;
        }
        ModelFile::Latent { model } => {
            write_json(&a.out.join("weights.json"), &weight_map(&model.model))?;
            write_atomic(&a.out.join("latent.csv"), |w| write_latent_csv(w, &model.latent))?;
        }
        ModelFile::Sentiment { .. } => {}
    }
    Ok(())
}

fn resolve_node(net: &SignedNetwork, token: &str) -> Option<NodeId> {
    if let Some(id) = net.names().id(token) {
        return Some(id);
    }
    let id: u32 = token.parse().ok()?;
    ((id as usize) < net.node_count()).then_some(NodeId(id))
}

fn read_pairs(path: &Path, net: &SignedNetwork) -> Outcome<Vec<(NodeId, NodeId)>> {
    let f = File::open(path).data(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.data(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Failure::Data(anyhow!("{} line {}: {msg}", path.display(), i + 1));
        let Some((s, t)) = line.split_once('\t') else {
            return Err(bad("expected src<TAB>tgt".into()));
        };
        let s = resolve_node(net, s.trim()).ok_or_else(|| bad(format!("unknown node {s:?}")))?;
        let t = resolve_node(net, t.trim()).ok_or_else(|| bad(format!("unknown node {t:?}")))?;
        if s == t {
            return Err(bad("self pair".into()));
        }
        out.push((s, t));
    }
    Ok(out)
}

fn cmd_predict(a: &PredictArgs) -> Outcome<()> {
    let (net, _) = load_dataset(&a.data)?;
    let text = fs::read_to_string(&a.model_file).data(|| format!("reading {}", a.model_file.display()))?;
    let file: ModelFile =
        serde_json::from_str(&text).data(|| format!("parsing {}", a.model_file.display()))?;
    let pairs = read_pairs(&a.pairs, &net)?;
    let fail = || "scoring pairs".to_string();
    let scores = match &file {
        ModelFile::Triadic { model } => model.predict(&net, &pairs, None).model(fail)?,
        ModelFile::Latent { model } => model.predict(&net, &pairs).model(fail)?,
        ModelFile::Sentiment { model } => model.score_pairs(&net, &pairs),
        ModelFile::Fused { model, sentiment } => {
            let priors = sentiment.score_pairs(&net, &pairs);
            model.predict(&net, &pairs, Some(&priors)).model(fail)?
        }
    };
    let names = net.names();
    write_atomic(&a.out, |w| {
        writeln!(w, "src_id,tgt_id,src,tgt,score,label")?;
        for (&(s, t), &p) in pairs.iter().zip(&scores) {
            let label = hard_label(p, 1.0 - p).bit();
            let quote = |n: Option<&str>| format!("\"{}\"", n.unwrap_or("").replace('"', "\"\""));
            writeln!(w, "{},{},{},{},{p},{label}", s.0, t.0, quote(names.name(s)), quote(names.name(t)))?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    data: String,
    seed: u64,
    n_folds: usize,
    evidence_ratio: f64,
    threshold: f64,
    learn: &'static str,
    reports: &'a [EvalReport],
}

fn cmd_evaluate(a: &EvaluateArgs) -> Outcome<()> {
    let (net, _) = load_dataset(&a.data)?;
    let plan = match a.holdout {
        Some(f) => holdout_plan(&net, f, a.seed),
        None => make_folds(&net, a.folds, a.seed),
    }
    .map_err(|e| Failure::Usage(format!("fold plan: {e}")))?;
    let m = &a.model_args;
    let kinds: Vec<ModelKind> = match a.model {
        EvalModel::Triadic => vec![ModelKind::Triadic],
        EvalModel::Latent => vec![ModelKind::Latent],
        EvalModel::Sentiment => vec![ModelKind::Sentiment],
        EvalModel::Fused => vec![ModelKind::Fused],
        EvalModel::All => vec![ModelKind::Triadic, ModelKind::Latent, ModelKind::Sentiment, ModelKind::Fused],
    };
    if m.rules.is_some() {
        return Err(Failure::Usage("--rules is only supported by `train`".into()));
    }
    let mut reports = Vec::new();
    for kind in kinds {
        let spec = match kind {
            ModelKind::Triadic => ModelSpec::Triadic(triadic_config(m, a.seed, false)),
            ModelKind::Latent => ModelSpec::Latent(LatentConfig {
                triadic: triadic_config(m, a.seed, false),
                latent_exponent: exponent(m.exponent),
                max_iters: m.em_iters,
                ..LatentConfig::default()
            }),
            ModelKind::Sentiment => ModelSpec::Sentiment(sentiment_config(m)),
            ModelKind::Fused => ModelSpec::Fused {
                triadic: triadic_config(m, a.seed, true),
                sentiment: sentiment_config(m),
            },
        };
        log::info!("evaluating {} on {} folds", kind.name(), plan.n_folds.max(1));
        reports.push(cross_validate(&spec, &net, &plan, a.threshold, a.jobs.max(1)));
    }

    let out = EvalOutput {
        data: a.data.display().to_string(),
        seed: a.seed,
        n_folds: plan.n_folds,
        evidence_ratio: plan.evidence_ratio,
        threshold: a.threshold,
        learn: match m.learn {
            Learn::Mle => "mle",
            Learn::Mple => "mple",
        },
        reports: &reports,
    };
    write_json(&a.out.join("report.json"), &out)?;
    write_atomic(&a.out.join("report.csv"), |w| {
        for (i, r) in reports.iter().enumerate() {
            r.write_csv(&mut *w, i == 0)?;
        }
        Ok(())
    })?;
    for r in &reports {
        write_atomic(&a.out.join(format!("roc_{}.csv", r.model)), |w| r.write_roc_csv(w))?;
        write_atomic(&a.out.join(format!("pr_pos_{}.csv", r.model)), |w| {
            r.write_pr_csv(w, RelevantClass::Positive)
        })?;
        write_atomic(&a.out.join(format!("pr_neg_{}.csv", r.model)), |w| {
            r.write_pr_csv(w, RelevantClass::Negative)
        })?;
        match &r.mean {
            Some(mean) => println!(
                "{}: AUC/ROC {:.4}  AUC/posPR {:.4}  AUC/negPR {:.4}  precision {:.4}  recall {:.4}",
                r.model, mean.auc_roc, mean.auc_pos_pr, mean.auc_neg_pr, mean.precision, mean.recall
            ),
            None => println!("{}: no successful folds", r.model),
        }
    }
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.folds
                .iter()
                .filter_map(move |f| f.error.as_ref().map(|e| format!("{} fold {}: {e}", r.model, f.fold)))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Model(anyhow!("{} fold(s) failed:\n  {}", failed.len(), failed.join("\n  "))))
    }
}

fn cmd_synth(a: &SynthArgs) -> Outcome<()> {
    let cfg = SynthConfig {
        users: a.users,
        pairs: a.pairs,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let n_cand = (a.users as f64 * cfg.candidate_fraction).round() as usize;
    if a.users < 3 || a.pairs < a.users || a.pairs > n_cand * (a.users - 1) / 2 {
        return Err(Failure::Usage(format!(
            "cannot place {} distinct pairs among {} users",
            a.pairs, a.users
        )));
    }
    let records = generate(&cfg);
    write_atomic(&a.out, |w| write_records(w, &records))
}

fn run(cli: &Cli) -> Outcome<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Rules(a) => cmd_rules(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(f) => return report(f),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let code = f.code();
    match f {
        Failure::Usage(msg) => eprintln!("error: {msg}"),
        Failure::Data(e) | Failure::Model(e) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(code)
}
