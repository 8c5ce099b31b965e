//! Reader for the wiki-RfA vote dump and the preprocessing applied before any
//! model sees the network: neutral-vote removal, snowball node sampling and
//! positive-edge thinning.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AddOutcome, NameMap, NodeId, Sign, SignedNetwork};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("sample size {requested} exceeds node count {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("positive keep fraction must be in (0, 1], got {0}")]
    BadKeepFraction(f64),
    #[error("malformed edge list line {line}: {msg}")]
    EdgeList { line: usize, msg: String },
    #[error("dataset sidecar: {0}")]
    Sidecar(String),
}

/// One vote block of the dump.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfaRecord {
    pub src: String,
    pub tgt: String,
    /// −1, 0 or 1.
    pub vot: i32,
    pub res: Option<i32>,
    pub yea: Option<i32>,
    pub dat: String,
    pub txt: String,
}

/// A block that could not be turned into a record. `line` is 1-based and
/// points at the first line of the block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedRecords {
    pub records: Vec<RfaRecord>,
    pub errors: Vec<RecordError>,
}

#[derive(Default)]
struct Block {
    start_line: usize,
    src: Option<String>,
    tgt: Option<String>,
    vot: Option<String>,
    res: Option<String>,
    yea: Option<String>,
    dat: Option<String>,
    txt: Option<String>,
    seen_any: bool,
}

impl Block {
    fn finish(self) -> Result<RfaRecord, RecordError> {
        let line = self.start_line;
        let err = |message: String| RecordError { line, message };
        let src = self.src.ok_or_else(|| err("missing SRC".into()))?;
        let tgt = self.tgt.ok_or_else(|| err("missing TGT".into()))?;
        if src.is_empty() {
            return Err(err("empty SRC".into()));
        }
        if tgt.is_empty() {
            return Err(err("empty TGT".into()));
        }
        let vot_raw = self.vot.ok_or_else(|| err("missing VOT".into()))?;
        let vot: i32 = vot_raw
            .trim()
            .parse()
            .map_err(|_| err(format!("malformed VOT {vot_raw:?}")))?;
        if !(-1..=1).contains(&vot) {
            return Err(err(format!("VOT {vot} outside {{-1, 0, 1}}")));
        }
        Ok(RfaRecord {
            src,
            tgt,
            vot,
            res: self.res.and_then(|r| r.trim().parse().ok()),
            yea: self.yea.and_then(|y| y.trim().parse().ok()),
            dat: self.dat.unwrap_or_default(),
            txt: self.txt.unwrap_or_default(),
        })
    }
}

/// Parses `KEY:value` blocks separated by blank lines. Invalid UTF-8 is
/// replaced, unknown keys are ignored, and broken blocks are reported in
/// [`ParsedRecords::errors`] instead of aborting the parse.
pub fn parse_records<R: BufRead>(mut input: R) -> Result<ParsedRecords, IngestError> {
    let mut out = ParsedRecords::default();
    let mut block = Block::default();
    let mut buf = Vec::new();
    let mut line_no = 0usize;

    let flush = |block: Block, out: &mut ParsedRecords| {
        if block.seen_any {
            match block.finish() {
                Ok(r) => out.records.push(r),
                Err(e) => out.errors.push(e),
            }
        }
    };

    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let text = String::from_utf8_lossy(&buf);
        let line = text.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            flush(std::mem::take(&mut block), &mut out);
            continue;
        }
        if !block.seen_any {
            block.seen_any = true;
            block.start_line = line_no;
        }
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = Some(value.to_string());
        match key {
            "SRC" => block.src = value,
            "TGT" => block.tgt = value,
            "VOT" => block.vot = value,
            "RES" => block.res = value,
            "YEA" => block.yea = value,
            "DAT" => block.dat = value,
            "TXT" => block.txt = value,
            _ => {}
        }
    }
    flush(block, &mut out);
    Ok(out)
}

/// Writes records back in dump format, one blank line after each block.
pub fn write_records<W: Write>(mut w: W, records: &[RfaRecord]) -> io::Result<()> {
    for r in records {
        writeln!(w, "SRC:{}", r.src)?;
        writeln!(w, "TGT:{}", r.tgt)?;
        writeln!(w, "VOT:{}", r.vot)?;
        writeln!(w, "RES:{}", r.res.map(|v| v.to_string()).unwrap_or_default())?;
        writeln!(w, "YEA:{}", r.yea.map(|v| v.to_string()).unwrap_or_default())?;
        writeln!(w, "DAT:{}", r.dat)?;
        writeln!(w, "TXT:{}", r.txt)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub sample_nodes: Option<usize>,
    pub positive_keep_fraction: f64,
    pub rng_seed: u64,
    pub drop_neutral: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            sample_nodes: None,
            positive_keep_fraction: 0.25,
            rng_seed: 0,
            drop_neutral: true,
        }
    }
}

impl IngestConfig {
    /// No sampling, no thinning.
    pub fn full() -> Self {
        IngestConfig {
            positive_keep_fraction: 1.0,
            ..Default::default()
        }
    }
}

/// Counts reported by [`build_network`], at both the raw stage (every parsed
/// record, neutral votes included) and the signed stage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: usize,
    pub record_errors: usize,
    /// Distinct user names across all records.
    pub nodes_raw: usize,
    /// Distinct ordered (src, tgt) pairs across all records.
    pub edges_raw: usize,
    pub neutral_dropped: usize,
    pub self_votes_dropped: usize,
    pub replacements: usize,
    /// Nodes touching at least one signed edge.
    pub nodes_signed: usize,
    pub edges_signed: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Maps names to dense IDs in first-occurrence order and adds one edge per
/// signed vote; a later vote on the same ordered pair replaces the earlier.
pub fn build_network(records: &[RfaRecord], cfg: &IngestConfig) -> (SignedNetwork, IngestStats) {
    let mut names = NameMap::new();
    let mut raw_pairs = HashSet::with_capacity(records.len());
    for r in records {
        let s = names.get_or_insert(&r.src);
        let t = names.get_or_insert(&r.tgt);
        raw_pairs.insert((s, t));
    }
    let mut stats = IngestStats {
        records: records.len(),
        nodes_raw: names.len(),
        edges_raw: raw_pairs.len(),
        ..Default::default()
    };

    let mut net = SignedNetwork::with_names(names);
    for r in records {
        let sign = match r.vot {
            1 => Sign::Positive,
            -1 => Sign::Negative,
            _ => {
                if cfg.drop_neutral {
                    stats.neutral_dropped += 1;
                    continue;
                }
                // neutral kept only on request; treated as not-negative
                Sign::Positive
            }
        };
        let s = net.names().id(&r.src).expect("registered above");
        let t = net.names().id(&r.tgt).expect("registered above");
        let comment = (!r.txt.is_empty()).then(|| r.txt.clone());
        match net.add_edge(s, t, sign, comment) {
            Ok(AddOutcome::Replaced { .. }) => stats.replacements += 1,
            Ok(AddOutcome::Inserted) => {}
            Err(_) => stats.self_votes_dropped += 1,
        }
    }
    fill_signed_stats(&net, &mut stats);
    (net, stats)
}

fn fill_signed_stats(net: &SignedNetwork, stats: &mut IngestStats) {
    let mut touched = vec![false; net.node_count()];
    for (s, t, _) in net.signed_pairs() {
        touched[s.index()] = true;
        touched[t.index()] = true;
    }
    stats.nodes_signed = touched.iter().filter(|&&x| x).count();
    stats.edges_signed = net.edge_count();
    stats.positives = net.positive_count();
    stats.negatives = net.negative_count();
}

/// Seeded snowball sample followed by positive-edge thinning.
///
/// The sample starts from a uniformly chosen node and expands breadth-first
/// over undirected adjacency; when a component is exhausted before the quota
/// a new uniformly chosen unvisited start is drawn. The result is the induced
/// subgraph, relabelled densely. Each positive edge is then kept with
/// probability `positive_keep_fraction`; negative edges are always kept.
pub fn sample_and_balance(
    net: &SignedNetwork,
    cfg: &IngestConfig,
) -> Result<SignedNetwork, IngestError> {
    let f = cfg.positive_keep_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(IngestError::BadKeepFraction(f));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let sampled = match cfg.sample_nodes {
        None => net.clone(),
        Some(k) => {
            if k > net.node_count() {
                return Err(IngestError::SampleTooLarge {
                    requested: k,
                    available: net.node_count(),
                });
            }
            let nodes = snowball(net, k, &mut rng);
            net.induced_subgraph(&nodes).0
        }
    };
    if f >= 1.0 {
        return Ok(sampled);
    }
    // one draw per positive edge in (src, tgt) order keeps this deterministic
    Ok(sampled.filter_edges(|e| !e.sign.is_positive() || rng.gen::<f64>() < f))
}

fn snowball(net: &SignedNetwork, quota: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let n = net.node_count();
    let mut visited = vec![false; n];
    let mut picked = Vec::with_capacity(quota);
    let mut order: Vec<NodeId> = net.nodes().collect();
    order.shuffle(rng);
    let mut starts = order.into_iter();
    let mut queue = VecDeque::new();
    let mut nbrs = BTreeSet::new();
    while picked.len() < quota {
        if queue.is_empty() {
            match starts.find(|v| !visited[v.index()]) {
                Some(s) => {
                    visited[s.index()] = true;
                    queue.push_back(s);
                }
                None => break,
            }
        }
        let Some(v) = queue.pop_front() else { break };
        picked.push(v);
        nbrs.clear();
        nbrs.extend(net.out_neighbors(v).iter().chain(net.in_neighbors(v)).copied());
        for &u in &nbrs {
            if !visited[u.index()] {
                visited[u.index()] = true;
                queue.push_back(u);
            }
        }
    }
    picked
}

/// Writes `src_id<TAB>tgt_id<TAB>sign` lines in `(src, tgt)` order.
pub fn write_edge_list<W: Write>(mut w: W, net: &SignedNetwork) -> io::Result<()> {
    for (s, t, sign) in net.signed_pairs() {
        writeln!(w, "{}\t{}\t{}", s.0, t.0, sign.bit())?;
    }
    Ok(())
}

/// Reads an edge list written by [`write_edge_list`].
pub fn read_edge_list<R: BufRead>(
    input: R,
) -> Result<Vec<(NodeId, NodeId, Sign)>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| IngestError::EdgeList {
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut it = line.split('\t');
        let mut field = || -> Result<u32, IngestError> {
            it.next()
                .ok_or_else(|| bad("expected three tab-separated fields"))?
                .trim()
                .parse()
                .map_err(|_| bad("field is not a non-negative integer"))
        };
        let (s, t, b) = (field()?, field()?, field()?);
        let sign = u8::try_from(b)
            .ok()
            .and_then(Sign::from_bit)
            .ok_or_else(|| bad("sign must be 0 or 1"))?;
        out.push((NodeId(s), NodeId(t), sign));
    }
    Ok(out)
}

/// JSON sidecar stored next to an exported edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub name_map: NameMap,
    pub stats: IngestStats,
    pub config: IngestConfig,
    /// Stats of the network actually exported (after sampling and thinning).
    pub exported: IngestStats,
}

/// One line of the comment file stored next to an exported edge list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentLine {
    pub src: u32,
    pub tgt: u32,
    pub txt: String,
}

pub fn write_comments<W: Write>(mut w: W, net: &SignedNetwork) -> io::Result<()> {
    for e in net.edges() {
        if let Some(txt) = e.comment {
            let line = CommentLine {
                src: e.src.0,
                tgt: e.tgt.0,
                txt,
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_comments<R: BufRead>(input: R) -> Result<Vec<CommentLine>, IngestError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::Sidecar(e.to_string()))?);
    }
    Ok(out)
}

/// Stats for an already-built network (no raw stage available).
pub fn network_stats(net: &SignedNetwork) -> IngestStats {
    let mut stats = IngestStats {
        nodes_raw: net.node_count(),
        edges_raw: net.edge_count(),
        ..Default::default()
    };
    fill_signed_stats(net, &mut stats);
    stats
}

/// Reassembles a network from an exported edge list, its name map and the
/// optional comment lines.
pub fn assemble_network(
    names: NameMap,
    edges: &[(NodeId, NodeId, Sign)],
    comments: &[CommentLine],
) -> Result<SignedNetwork, IngestError> {
    let mut net = SignedNetwork::with_names(names);
    for &(s, t, sign) in edges {
        net.add_edge(s, t, sign, None)
            .map_err(|e| IngestError::Sidecar(e.to_string()))?;
    }
    for c in comments {
        let (s, t) = (NodeId(c.src), NodeId(c.tgt));
        let sign = net
            .sign(s, t)
            .ok_or_else(|| IngestError::Sidecar(format!("comment for unknown edge {s}->{t}")))?;
        net.add_edge(s, t, sign, Some(c.txt.clone()))
            .map_err(|e| IngestError::Sidecar(e.to_string()))?;
    }
    Ok(net)
}
