//! Directed signed networks and the two-edge triad structures rules ground over.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(NodeId),
    #[error("node {id} out of range (network has {node_count} nodes)")]
    NodeOutOfRange { id: NodeId, node_count: usize },
    #[error("duplicate user name {0:?}")]
    DuplicateName(String),
}

/// Dense node index, contiguous `0..node_count` within one network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// Binary edge label: 1 = upvote, 0 = downvote.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    pub fn from_bit(bit: u8) -> Option<Sign> {
        match bit {
            0 => Some(Sign::Negative),
            1 => Some(Sign::Positive),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Sign::Negative => 0,
            Sign::Positive => 1,
        }
    }

    /// Soft-truth value of the matching `Upvote` atom.
    pub fn value(self) -> f64 {
        f64::from(self.bit())
    }

    pub fn is_positive(self) -> bool {
        self == Sign::Positive
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedEdge {
    pub src: NodeId,
    pub tgt: NodeId,
    pub sign: Sign,
    pub comment: Option<String>,
}

/// Outcome of [`SignedNetwork::add_edge`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddOutcome {
    Inserted,
    /// An edge already existed on the ordered pair and was overwritten.
    Replaced { previous: Sign },
}

/// Bidirectional user-name table. IDs are handed out in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct NameMap {
    names: Vec<String>,
    ids: HashMap<String, NodeId>,
}

impl TryFrom<Vec<String>> for NameMap {
    type Error = GraphError;

    fn try_from(names: Vec<String>) -> Result<Self, GraphError> {
        NameMap::from_names(names)
    }
}

impl From<NameMap> for Vec<String> {
    fn from(m: NameMap) -> Self {
        m.names
    }
}

impl NameMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a map from names listed in ID order.
    pub fn from_names(names: Vec<String>) -> Result<Self, GraphError> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if ids.insert(n.clone(), NodeId(i as u32)).is_some() {
                return Err(GraphError::DuplicateName(n.clone()));
            }
        }
        Ok(NameMap { names, ids })
    }

    /// Returns the ID for `name`, assigning the next free one on first sight.
    pub fn get_or_insert(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct EdgeData {
    sign: Sign,
    comment: Option<String>,
}

/// Directed graph with at most one signed, optionally commented edge per
/// ordered node pair.
///
/// Edges iterate in `(src, tgt)` order regardless of insertion order, and the
/// per-node neighbor lists are kept sorted, so everything derived from a
/// network is a function of its edge set alone.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SignedNetwork {
    node_count: usize,
    edges: BTreeMap<(NodeId, NodeId), EdgeData>,
    out_adj: Vec<Vec<NodeId>>,
    in_adj: Vec<Vec<NodeId>>,
    names: NameMap,
}

impl SignedNetwork {
    pub fn with_nodes(node_count: usize) -> Self {
        SignedNetwork {
            node_count,
            edges: BTreeMap::new(),
            out_adj: vec![Vec::new(); node_count],
            in_adj: vec![Vec::new(); node_count],
            names: NameMap::new(),
        }
    }

    /// Network whose nodes are the entries of `names`.
    pub fn with_names(names: NameMap) -> Self {
        let mut net = Self::with_nodes(names.len());
        net.names = names;
        net
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn names(&self) -> &NameMap {
        &self.names
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count as u32).map(NodeId)
    }

    fn check(&self, id: NodeId) -> Result<(), GraphError> {
        if id.index() < self.node_count {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange {
                id,
                node_count: self.node_count,
            })
        }
    }

    pub fn add_edge(
        &mut self,
        src: NodeId,
        tgt: NodeId,
        sign: Sign,
        comment: Option<String>,
    ) -> Result<AddOutcome, GraphError> {
        self.check(src)?;
        self.check(tgt)?;
        if src == tgt {
            return Err(GraphError::SelfLoop(src));
        }
        let data = EdgeData { sign, comment };
        match self.edges.insert((src, tgt), data) {
            Some(prev) => Ok(AddOutcome::Replaced {
                previous: prev.sign,
            }),
            None => {
                insert_sorted(&mut self.out_adj[src.index()], tgt);
                insert_sorted(&mut self.in_adj[tgt.index()], src);
                Ok(AddOutcome::Inserted)
            }
        }
    }

    pub fn has_edge(&self, src: NodeId, tgt: NodeId) -> bool {
        self.edges.contains_key(&(src, tgt))
    }

    pub fn sign(&self, src: NodeId, tgt: NodeId) -> Option<Sign> {
        self.edges.get(&(src, tgt)).map(|e| e.sign)
    }

    pub fn comment(&self, src: NodeId, tgt: NodeId) -> Option<&str> {
        self.edges.get(&(src, tgt)).and_then(|e| e.comment.as_deref())
    }

    pub fn edge(&self, src: NodeId, tgt: NodeId) -> Option<SignedEdge> {
        self.edges.get(&(src, tgt)).map(|d| SignedEdge {
            src,
            tgt,
            sign: d.sign,
            comment: d.comment.clone(),
        })
    }

    /// All edges in `(src, tgt)` order.
    pub fn edges(&self) -> impl Iterator<Item = SignedEdge> + '_ {
        self.edges.iter().map(|(&(src, tgt), d)| SignedEdge {
            src,
            tgt,
            sign: d.sign,
            comment: d.comment.clone(),
        })
    }

    /// `(src, tgt, sign)` triples in `(src, tgt)` order, without cloning comments.
    pub fn signed_pairs(&self) -> impl Iterator<Item = (NodeId, NodeId, Sign)> + '_ {
        self.edges.iter().map(|(&(s, t), d)| (s, t, d.sign))
    }

    /// Sorted out-neighbors of `node`.
    pub fn out_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.out_adj[node.index()]
    }

    /// Sorted in-neighbors of `node`.
    pub fn in_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.in_adj[node.index()]
    }

    pub fn degree_stats(&self, node: NodeId) -> Result<DegreeStats, GraphError> {
        self.check(node)?;
        let mut stats = DegreeStats::default();
        for &t in self.out_neighbors(node) {
            match self.edges[&(node, t)].sign {
                Sign::Positive => stats.out_pos += 1,
                Sign::Negative => stats.out_neg += 1,
            }
        }
        for &s in self.in_neighbors(node) {
            match self.edges[&(s, node)].sign {
                Sign::Positive => stats.in_pos += 1,
                Sign::Negative => stats.in_neg += 1,
            }
        }
        Ok(stats)
    }

    /// Copy of the network without the given ordered pairs. Node set and
    /// names are kept.
    pub fn without_pairs<'a, I>(&self, pairs: I) -> SignedNetwork
    where
        I: IntoIterator<Item = &'a (NodeId, NodeId)>,
    {
        let drop: std::collections::HashSet<(NodeId, NodeId)> =
            pairs.into_iter().copied().collect();
        self.filter_edges(|e| !drop.contains(&(e.src, e.tgt)))
    }

    /// Copy keeping only the edges for which `keep` returns true.
    pub fn filter_edges<F>(&self, mut keep: F) -> SignedNetwork
    where
        F: FnMut(&SignedEdge) -> bool,
    {
        let mut out = SignedNetwork::with_names(self.names.clone());
        out.node_count = self.node_count;
        out.out_adj.resize(self.node_count, Vec::new());
        out.in_adj.resize(self.node_count, Vec::new());
        for e in self.edges() {
            if keep(&e) {
                out.add_edge(e.src, e.tgt, e.sign, e.comment)
                    .expect("edge copied from a valid network");
            }
        }
        out
    }

    /// Subgraph induced by `nodes`, relabelled densely in ascending order of
    /// the original IDs. Returns the new network and the old-ID table.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> (SignedNetwork, Vec<NodeId>) {
        let mut kept: Vec<NodeId> = nodes.to_vec();
        kept.sort_unstable();
        kept.dedup();
        let mut remap = vec![u32::MAX; self.node_count];
        let mut names = Vec::with_capacity(kept.len());
        for (new, &old) in kept.iter().enumerate() {
            remap[old.index()] = new as u32;
            names.push(
                self.names
                    .name(old)
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("node{}", old.0)),
            );
        }
        let names = NameMap::from_names(names).expect("names unique in source network");
        let mut sub = SignedNetwork::with_names(names);
        for (&(s, t), d) in &self.edges {
            let (ns, nt) = (remap[s.index()], remap[t.index()]);
            if ns != u32::MAX && nt != u32::MAX {
                sub.add_edge(NodeId(ns), NodeId(nt), d.sign, d.comment.clone())
                    .expect("induced edge is valid");
            }
        }
        (sub, kept)
    }

    pub fn positive_count(&self) -> usize {
        self.edges.values().filter(|d| d.sign.is_positive()).count()
    }

    pub fn negative_count(&self) -> usize {
        self.edges.len() - self.positive_count()
    }
}

fn insert_sorted(v: &mut Vec<NodeId>, id: NodeId) {
    if let Err(pos) = v.binary_search(&id) {
        v.insert(pos, id);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub out_pos: usize,
    pub out_neg: usize,
    pub in_pos: usize,
    pub in_neg: usize,
}

impl DegreeStats {
    pub fn total(&self) -> usize {
        self.out_pos + self.out_neg + self.in_pos + self.in_neg
    }

    pub fn out_degree(&self) -> usize {
        self.out_pos + self.out_neg
    }

    pub fn in_degree(&self) -> usize {
        self.in_pos + self.in_neg
    }
}

/// Orientation of the two context edges around the middle node `b` of a triad
/// whose target pair is `(a, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TriadTemplate {
    /// a→b, b→c
    ForwardPath,
    /// b→a, c→b
    BackwardPath,
    /// a→b, c→b
    CommonTarget,
    /// b→a, b→c
    CommonSource,
}

impl TriadTemplate {
    pub const ALL: [TriadTemplate; 4] = [
        TriadTemplate::ForwardPath,
        TriadTemplate::BackwardPath,
        TriadTemplate::CommonTarget,
        TriadTemplate::CommonSource,
    ];

    /// Context edges for the triad `(a, b, c)` in the order (edge touching
    /// `a`, edge touching `c`).
    pub fn context_edges(self, a: NodeId, b: NodeId, c: NodeId) -> [(NodeId, NodeId); 2] {
        match self {
            TriadTemplate::ForwardPath => [(a, b), (b, c)],
            TriadTemplate::BackwardPath => [(b, a), (c, b)],
            TriadTemplate::CommonTarget => [(a, b), (c, b)],
            TriadTemplate::CommonSource => [(b, a), (b, c)],
        }
    }

    /// Classifies the orientation of the edge between `a` and `b` and the one
    /// between `b` and `c`: `a_to_b` is true for a→b, `b_to_c` for b→c.
    pub fn from_orientation(a_to_b: bool, b_to_c: bool) -> TriadTemplate {
        match (a_to_b, b_to_c) {
            (true, true) => TriadTemplate::ForwardPath,
            (false, false) => TriadTemplate::BackwardPath,
            (true, false) => TriadTemplate::CommonTarget,
            (false, true) => TriadTemplate::CommonSource,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TriadTemplate::ForwardPath => "fp",
            TriadTemplate::BackwardPath => "bp",
            TriadTemplate::CommonTarget => "ct",
            TriadTemplate::CommonSource => "cs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriadInstance {
    pub a: NodeId,
    pub b: NodeId,
    pub c: NodeId,
    pub template: TriadTemplate,
}

impl TriadInstance {
    pub fn target_pair(&self) -> (NodeId, NodeId) {
        (self.a, self.c)
    }

    pub fn context_edges(&self) -> [(NodeId, NodeId); 2] {
        self.template.context_edges(self.a, self.b, self.c)
    }
}

fn intersect_into(x: &[NodeId], y: &[NodeId], out: &mut Vec<NodeId>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(x[i]);
                i += 1;
                j += 1;
            }
        }
    }
}

/// Every triad whose target pair is in `target_pairs` and whose two context
/// edges exist, sorted by `(a, b, c, template)` and free of duplicates.
///
/// Pairs with an out-of-range endpoint or `a == c` contribute nothing.
pub fn enumerate_triads<'a, I>(net: &SignedNetwork, target_pairs: I) -> Vec<TriadInstance>
where
    I: IntoIterator<Item = &'a (NodeId, NodeId)>,
{
    let mut pairs: Vec<(NodeId, NodeId)> = target_pairs
        .into_iter()
        .copied()
        .filter(|&(a, c)| a != c && a.index() < net.node_count && c.index() < net.node_count)
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    let mut out = Vec::new();
    let mut buf = Vec::new();
    for (a, c) in pairs {
        for template in TriadTemplate::ALL {
            let (left, right) = match template {
                TriadTemplate::ForwardPath => (net.out_neighbors(a), net.in_neighbors(c)),
                TriadTemplate::BackwardPath => (net.in_neighbors(a), net.out_neighbors(c)),
                TriadTemplate::CommonTarget => (net.out_neighbors(a), net.out_neighbors(c)),
                TriadTemplate::CommonSource => (net.in_neighbors(a), net.in_neighbors(c)),
            };
            intersect_into(left, right, &mut buf);
            out.extend(
                buf.iter()
                    .filter(|&&b| b != a && b != c)
                    .map(|&b| TriadInstance { a, b, c, template }),
            );
        }
    }
    out.sort_unstable();
    out
}

/// Target pairs `(a, c)` of every triad that has `(x, y)` as one of its two
/// context edges. The target pair need not be an edge.
pub fn targets_using_context_edge(net: &SignedNetwork, x: NodeId, y: NodeId) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    // edge as a→b: ForwardPath (c ∈ out(y)), CommonTarget (c ∈ in(y))
    for &c in net.out_neighbors(y).iter().chain(net.in_neighbors(y)) {
        if c != x {
            out.push((x, c));
        }
    }
    // edge as b→c: ForwardPath (a ∈ in(x)); CommonSource (a ∈ out(x))
    for &a in net.in_neighbors(x).iter().chain(net.out_neighbors(x)) {
        if a != y {
            out.push((a, y));
        }
    }
    // edge as b→a: BackwardPath (c ∈ in(x)); CommonSource (c ∈ out(x))
    for &c in net.in_neighbors(x).iter().chain(net.out_neighbors(x)) {
        if c != y {
            out.push((y, c));
        }
    }
    // edge as c→b: BackwardPath (a ∈ out(y)); CommonTarget (a ∈ in(y))
    for &a in net.out_neighbors(y).iter().chain(net.in_neighbors(y)) {
        if a != x {
            out.push((a, x));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
