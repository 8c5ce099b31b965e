use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Exponent, Literal, Predicate, PslError, Rule};
use crate::graph::{
    enumerate_triads, targets_using_context_edge, NodeId, SignedNetwork, TriadInstance,
    TriadTemplate,
};

/// A concrete atom. Unary atoms store their single argument twice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AtomKey {
    pub predicate: Predicate,
    pub a: NodeId,
    pub b: NodeId,
}

impl AtomKey {
    pub fn edge(predicate: Predicate, a: NodeId, b: NodeId) -> Self {
        debug_assert!(predicate.is_edge());
        AtomKey { predicate, a, b }
    }

    pub fn node(predicate: Predicate, a: NodeId) -> Self {
        debug_assert!(!predicate.is_edge());
        AtomKey { predicate, a, b: a }
    }

    pub fn up(a: NodeId, b: NodeId) -> Self {
        Self::edge(Predicate::Upvote, a, b)
    }

    pub fn down(a: NodeId, b: NodeId) -> Self {
        Self::edge(Predicate::Downvote, a, b)
    }
}

/// Position of an atom in an [`HlMrf`]'s free or observed list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomRef {
    Free(u32),
    Observed(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroundLiteral {
    pub atom: AtomRef,
    pub negated: bool,
}

/// One potential `w[slot] · scale · d^p`. A missing head reads as false.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundRule {
    pub slot: u32,
    pub scale: f64,
    pub exponent: Exponent,
    pub body: Vec<GroundLiteral>,
    pub head: Option<GroundLiteral>,
}

/// A named weight shared by every ground rule instantiated from one rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub name: String,
    pub weight: f64,
}

/// Per-node latent values, indexed by node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentValues {
    pub active: Vec<f64>,
    pub favorable: Vec<f64>,
}

impl LatentValues {
    pub fn uniform(n: usize, v: f64) -> Self {
        LatentValues {
            active: vec![v; n],
            favorable: vec![v; n],
        }
    }

    pub fn get(&self, predicate: Predicate, node: NodeId) -> Option<f64> {
        match predicate {
            Predicate::Active => self.active.get(node.index()).copied(),
            Predicate::Favorable => self.favorable.get(node.index()).copied(),
            _ => None,
        }
    }

    pub fn set(&mut self, predicate: Predicate, node: NodeId, v: f64) {
        match predicate {
            Predicate::Active => self.active[node.index()] = v,
            Predicate::Favorable => self.favorable[node.index()] = v,
            _ => {}
        }
    }
}

/// How `Active`/`Favorable` atoms enter a grounding.
#[derive(Clone, Copy, Debug, Default)]
pub enum LatentAtoms<'a> {
    /// Rules mentioning latent predicates produce no ground rules.
    #[default]
    Absent,
    /// Latent atoms of every node with at least one edge are free.
    Free,
    Observed(&'a LatentValues),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GroundScope {
    /// Only ground rules with at least one free atom.
    #[default]
    TouchingFree,
    /// Every grounding, including fully observed (constant) ones.
    All,
}

/// Grounded hinge-loss MRF. The density's normalizer is never computed; MAP
/// inference and the learning surrogates do not need it.
#[derive(Clone, Debug, Default)]
pub struct HlMrf {
    free: Vec<AtomKey>,
    observed: Vec<AtomKey>,
    observed_values: Vec<f64>,
    index: HashMap<AtomKey, AtomRef>,
    ground_rules: Vec<GroundRule>,
    slots: Vec<SlotInfo>,
}

impl HlMrf {
    pub fn free_atoms(&self) -> &[AtomKey] {
        &self.free
    }

    pub fn observed_atoms(&self) -> &[AtomKey] {
        &self.observed
    }

    pub fn observed_values(&self) -> &[f64] {
        &self.observed_values
    }

    pub fn ground_rules(&self) -> &[GroundRule] {
        &self.ground_rules
    }

    pub fn slots(&self) -> &[SlotInfo] {
        &self.slots
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn atom(&self, key: &AtomKey) -> Option<AtomRef> {
        self.index.get(key).copied()
    }

    pub fn free_index(&self, key: &AtomKey) -> Option<usize> {
        match self.index.get(key) {
            Some(AtomRef::Free(i)) => Some(*i as usize),
            _ => None,
        }
    }

    /// Initial weights as stored with the slots.
    pub fn default_weights(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.weight).collect()
    }

    pub fn add_slot(&mut self, name: &str, weight: f64) -> u32 {
        self.slots.push(SlotInfo {
            name: name.to_string(),
            weight,
        });
        (self.slots.len() - 1) as u32
    }

    /// Registers `key` as a free atom, or returns its existing reference.
    pub fn add_free_atom(&mut self, key: AtomKey) -> AtomRef {
        self.register_free(key)
    }

    /// Registers `key` as observed at `value` (clamped to `[0,1]`), or
    /// returns its existing reference unchanged.
    pub fn add_observed_atom(&mut self, key: AtomKey, value: f64) -> AtomRef {
        self.register_observed(key, value)
    }

    /// Appends a hand-built ground rule after checking its slot and atoms.
    pub fn push_ground_rule(&mut self, g: GroundRule) -> Result<(), PslError> {
        if g.slot as usize >= self.slots.len() {
            return Err(PslError::WeightCount {
                expected: g.slot as usize + 1,
                got: self.slots.len(),
            });
        }
        for l in g.body.iter().chain(g.head.as_ref()) {
            let ok = match l.atom {
                AtomRef::Free(i) => (i as usize) < self.free.len(),
                AtomRef::Observed(i) => (i as usize) < self.observed.len(),
            };
            if !ok {
                return Err(PslError::UnresolvedAtom(l.atom));
            }
        }
        self.ground_rules.push(g);
        Ok(())
    }

    fn register_free(&mut self, key: AtomKey) -> AtomRef {
        if let Some(&r) = self.index.get(&key) {
            return r;
        }
        let r = AtomRef::Free(self.free.len() as u32);
        self.free.push(key);
        self.index.insert(key, r);
        r
    }

    fn register_observed(&mut self, key: AtomKey, value: f64) -> AtomRef {
        if let Some(&r) = self.index.get(&key) {
            return r;
        }
        let r = AtomRef::Observed(self.observed.len() as u32);
        self.observed.push(key);
        self.observed_values.push(value.clamp(0.0, 1.0));
        self.index.insert(key, r);
        r
    }

    /// Overwrites the value of an observed atom. Returns false when the atom
    /// is not observed in this MRF.
    pub fn set_observed(&mut self, key: &AtomKey, value: f64) -> bool {
        match self.index.get(key) {
            Some(AtomRef::Observed(i)) => {
                self.observed_values[*i as usize] = value.clamp(0.0, 1.0);
                true
            }
            _ => false,
        }
    }

    /// Refreshes every observed latent atom from `values`.
    pub fn set_latent_values(&mut self, values: &LatentValues) {
        for (k, v) in self.observed.iter().zip(self.observed_values.iter_mut()) {
            if let Some(x) = values.get(k.predicate, k.a) {
                *v = x.clamp(0.0, 1.0);
            }
        }
    }

    fn value(&self, r: AtomRef, free: &[f64]) -> Result<f64, PslError> {
        match r {
            AtomRef::Free(i) => free.get(i as usize).copied(),
            AtomRef::Observed(i) => self.observed_values.get(i as usize).copied(),
        }
        .ok_or(PslError::UnresolvedAtom(r))
    }

    /// Łukasiewicz distance to satisfaction of `g` under the free values
    /// `free`, in `[0, 1]`.
    pub fn distance(&self, g: &GroundRule, free: &[f64]) -> Result<f64, PslError> {
        let lit = |l: &GroundLiteral| -> Result<f64, PslError> {
            let v = self.value(l.atom, free)?;
            Ok(if l.negated { super::luk_not(v) } else { v })
        };
        let mut body = 1.0;
        for l in &g.body {
            body = super::luk_and(body, lit(l)?);
        }
        let head = match &g.head {
            Some(h) => lit(h)?,
            None => 0.0,
        };
        Ok((body - head).max(0.0))
    }

    /// `Σ_g w[slot] · scale · d_g^p`.
    pub fn energy(&self, weights: &[f64], free: &[f64]) -> Result<f64, PslError> {
        self.check_weights(weights)?;
        let mut e = 0.0;
        for g in &self.ground_rules {
            let w = weights[g.slot as usize] * g.scale;
            if w != 0.0 {
                e += w * g.exponent.apply(self.distance(g, free)?);
            }
        }
        Ok(e)
    }

    /// Per-slot totals `Φ_s = Σ_{g in s} scale · d_g^p`.
    pub fn slot_potentials(&self, free: &[f64]) -> Result<Vec<f64>, PslError> {
        let mut phi = vec![0.0; self.slots.len()];
        for g in &self.ground_rules {
            phi[g.slot as usize] += g.scale * g.exponent.apply(self.distance(g, free)?);
        }
        Ok(phi)
    }

    pub(crate) fn check_weights(&self, weights: &[f64]) -> Result<(), PslError> {
        if weights.len() != self.slots.len() {
            return Err(PslError::WeightCount {
                expected: self.slots.len(),
                got: weights.len(),
            });
        }
        for (slot, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(PslError::BadWeight { slot, value: w });
            }
        }
        Ok(())
    }

    /// Linear form of the hinge: `d = max(0, constant + Σ coef·x_free)`.
    /// Terms are appended to `terms` unmerged.
    pub(crate) fn linear_form(&self, g: &GroundRule, terms: &mut Vec<(u32, f64)>) -> f64 {
        let k = g.body.len() as f64;
        // an empty body is true: -(0 - 1) = 1
        let mut constant = -(k - 1.0);
        let mut add = |l: &GroundLiteral, sign: f64, terms: &mut Vec<(u32, f64)>| {
            // literal value = x or 1 - x
            let (c, coef) = if l.negated { (1.0, -1.0) } else { (0.0, 1.0) };
            match l.atom {
                AtomRef::Free(i) => {
                    constant += sign * c;
                    terms.push((i, sign * coef));
                }
                AtomRef::Observed(i) => {
                    let v = self.observed_values[i as usize];
                    constant += sign * (c + coef * v);
                }
            }
        };
        for l in &g.body {
            add(l, 1.0, terms);
        }
        if let Some(h) = &g.head {
            add(h, -1.0, terms);
        }
        constant
    }

    /// Adds the two linear edge-cost potentials per free `Upvote` atom:
    /// `λ₁(1 − p)·x` under `pos_slot` and `λ₀·p·(1 − x)` under `neg_slot`.
    pub fn add_edge_costs(
        &mut self,
        costs: &[((NodeId, NodeId), f64)],
        pos_slot: u32,
        neg_slot: u32,
    ) -> usize {
        let mut added = 0;
        for &((a, b), p) in costs {
            let Some(AtomRef::Free(i)) = self.index.get(&AtomKey::up(a, b)).copied() else {
                continue;
            };
            let lit = GroundLiteral {
                atom: AtomRef::Free(i),
                negated: false,
            };
            self.ground_rules.push(GroundRule {
                slot: pos_slot,
                scale: 1.0 - p,
                exponent: Exponent::Linear,
                body: vec![lit],
                head: None,
            });
            self.ground_rules.push(GroundRule {
                slot: neg_slot,
                scale: p,
                exponent: Exponent::Linear,
                body: Vec::new(),
                head: Some(lit),
            });
            added += 1;
        }
        added
    }

    /// Ground-truth vector for the free edge atoms, read from `net`.
    /// Latent free atoms get `None`.
    pub fn truth_from(&self, net: &SignedNetwork) -> Vec<Option<f64>> {
        self.free
            .iter()
            .map(|k| {
                let s = net.sign(k.a, k.b)?;
                match k.predicate {
                    Predicate::Upvote => Some(s.value()),
                    Predicate::Downvote => Some(1.0 - s.value()),
                    _ => None,
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Node,
    Edge,
    Triad(TriadTemplate),
}

#[derive(Clone, Copy, Debug)]
struct CompiledLiteral {
    predicate: Predicate,
    args: [u8; 2],
    negated: bool,
}

#[derive(Clone, Debug)]
struct CompiledRule {
    slot: u32,
    exponent: Exponent,
    shape: Shape,
    body: Vec<CompiledLiteral>,
    head: CompiledLiteral,
    has_latent: bool,
}

fn compile(rule: &Rule, slot: u32) -> Result<CompiledRule, PslError> {
    let bad = |msg: &str| PslError::UnsupportedShape {
        rule: rule.id.clone(),
        msg: msg.to_string(),
    };
    let mut vars: Vec<&str> = Vec::new();
    for l in rule.literals() {
        for a in &l.args {
            if !vars.contains(&a.as_str()) {
                vars.push(a);
            }
        }
    }
    let binary: Vec<(&str, &str)> = rule
        .literals()
        .filter(|l| l.predicate.is_edge())
        .map(|l| (l.args[0].as_str(), l.args[1].as_str()))
        .collect();
    if binary.iter().any(|(a, b)| a == b) {
        return Err(bad("edge predicates need two distinct variables"));
    }

    let (shape, order): (Shape, Vec<&str>) = if binary.is_empty() {
        if vars.len() != 1 {
            return Err(bad("rules without edge predicates must use a single variable"));
        }
        (Shape::Node, vars.clone())
    } else if binary.iter().all(|&p| p == binary[0]) {
        if vars.len() != 2 {
            return Err(bad("edge rules may only use the two edge variables"));
        }
        (Shape::Edge, vec![binary[0].0, binary[0].1])
    } else if vars.len() == 3 {
        if !rule.head.predicate.is_edge() {
            return Err(bad("triad rules need an edge predicate in the head"));
        }
        let (x, z) = (rule.head.args[0].as_str(), rule.head.args[1].as_str());
        let y = *vars
            .iter()
            .find(|v| **v != x && **v != z)
            .expect("three variables");
        let mut xy: Option<bool> = None;
        let mut yz: Option<bool> = None;
        for l in &rule.body {
            if !l.predicate.is_edge() {
                continue;
            }
            let (u, v) = (l.args[0].as_str(), l.args[1].as_str());
            let (slot_ref, dir) = match (u, v) {
                _ if (u, v) == (x, y) => (&mut xy, true),
                _ if (u, v) == (y, x) => (&mut xy, false),
                _ if (u, v) == (y, z) => (&mut yz, true),
                _ if (u, v) == (z, y) => (&mut yz, false),
                _ => return Err(bad("triad body literals must link the middle variable to a head variable")),
            };
            match *slot_ref {
                Some(d) if d != dir => {
                    return Err(bad("both orientations of one pair in a triad rule"))
                }
                _ => *slot_ref = Some(dir),
            }
        }
        let (Some(a_to_b), Some(b_to_c)) = (xy, yz) else {
            return Err(bad("triad rules need one body edge on each side of the middle variable"));
        };
        (
            Shape::Triad(TriadTemplate::from_orientation(a_to_b, b_to_c)),
            vec![x, y, z],
        )
    } else {
        return Err(bad("only node, edge and triad shaped rules are supported"));
    };

    let lit = |l: &Literal| {
        let pos = |v: &str| order.iter().position(|o| *o == v).expect("variable in order") as u8;
        let a0 = pos(&l.args[0]);
        let a1 = if l.args.len() > 1 { pos(&l.args[1]) } else { a0 };
        CompiledLiteral {
            predicate: l.predicate,
            args: [a0, a1],
            negated: l.negated,
        }
    };
    Ok(CompiledRule {
        slot,
        exponent: rule.exponent,
        shape,
        body: rule.body.iter().map(lit).collect(),
        head: lit(&rule.head),
        has_latent: rule.literals().any(|l| !l.predicate.is_edge()),
    })
}

/// Builder for groundings beyond the plain "free test pairs" case.
pub struct Grounder<'a> {
    net: &'a SignedNetwork,
    free_pairs: BTreeSet<(NodeId, NodeId)>,
    latent: LatentAtoms<'a>,
    scope: GroundScope,
}

impl<'a> Grounder<'a> {
    pub fn new(net: &'a SignedNetwork) -> Self {
        Grounder {
            net,
            free_pairs: BTreeSet::new(),
            latent: LatentAtoms::Absent,
            scope: GroundScope::TouchingFree,
        }
    }

    /// Pairs whose edge atoms are free. Pairs that are not edges of the
    /// network are ignored.
    pub fn free_pairs<I: IntoIterator<Item = (NodeId, NodeId)>>(mut self, pairs: I) -> Self {
        let net = self.net;
        self.free_pairs
            .extend(pairs.into_iter().filter(|&(a, b)| net.has_edge(a, b)));
        self
    }

    pub fn latent(mut self, latent: LatentAtoms<'a>) -> Self {
        self.latent = latent;
        self
    }

    pub fn scope(mut self, scope: GroundScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn ground(&self, rules: &[Rule]) -> Result<HlMrf, PslError> {
        let compiled = rules
            .iter()
            .enumerate()
            .map(|(i, r)| compile(r, i as u32))
            .collect::<Result<Vec<_>, _>>()?;
        let mut mrf = HlMrf::default();
        for r in rules {
            mrf.add_slot(&r.id, r.weight);
        }

        for &(a, b) in &self.free_pairs {
            mrf.register_free(AtomKey::up(a, b));
            mrf.register_free(AtomKey::down(a, b));
        }
        let latent_domain = self.latent_domain();
        if matches!(self.latent, LatentAtoms::Free) {
            for v in self.net.nodes() {
                if latent_domain[v.index()] {
                    mrf.register_free(AtomKey::node(Predicate::Active, v));
                    mrf.register_free(AtomKey::node(Predicate::Favorable, v));
                }
            }
        }

        let latent_free = matches!(self.latent, LatentAtoms::Free);
        let mut all_triads: Option<Vec<TriadInstance>> = None;
        let mut touching_triads: Option<Vec<TriadInstance>> = None;
        let mut binding_buf: Vec<[NodeId; 3]> = Vec::new();

        for rule in &compiled {
            binding_buf.clear();
            let exhaustive = self.scope == GroundScope::All || (latent_free && rule.has_latent);
            match rule.shape {
                Shape::Node => {
                    for v in self.net.nodes() {
                        if latent_domain[v.index()] {
                            binding_buf.push([v, v, v]);
                        }
                    }
                }
                Shape::Edge => {
                    if exhaustive {
                        for (s, t, _) in self.net.signed_pairs() {
                            binding_buf.push([s, t, t]);
                        }
                    } else {
                        for &(s, t) in &self.free_pairs {
                            binding_buf.push([s, t, t]);
                        }
                    }
                }
                Shape::Triad(template) => {
                    let triads = if exhaustive {
                        all_triads.get_or_insert_with(|| {
                            let pairs: Vec<_> =
                                self.net.signed_pairs().map(|(s, t, _)| (s, t)).collect();
                            enumerate_triads(self.net, &pairs)
                        })
                    } else {
                        touching_triads.get_or_insert_with(|| self.touching_triads())
                    };
                    binding_buf.extend(
                        triads
                            .iter()
                            .filter(|t| t.template == template)
                            .map(|t| [t.a, t.b, t.c]),
                    );
                }
            }
            for nodes in &binding_buf {
                self.instantiate(&mut mrf, rule, nodes, &latent_domain);
            }
        }
        Ok(mrf)
    }

    fn latent_domain(&self) -> Vec<bool> {
        let mut dom = vec![false; self.net.node_count()];
        match self.latent {
            LatentAtoms::Absent => {}
            LatentAtoms::Free => {
                for (s, t, _) in self.net.signed_pairs() {
                    dom[s.index()] = true;
                    dom[t.index()] = true;
                }
            }
            LatentAtoms::Observed(vals) => {
                for (v, d) in dom.iter_mut().enumerate() {
                    *d = v < vals.active.len() && v < vals.favorable.len();
                }
            }
        }
        dom
    }

    /// Triads whose target pair is an edge and that contain at least one
    /// free pair, either as target or as a context edge.
    fn touching_triads(&self) -> Vec<TriadInstance> {
        let mut targets: HashSet<(NodeId, NodeId)> = self.free_pairs.iter().copied().collect();
        for &(x, y) in &self.free_pairs {
            targets.extend(
                targets_using_context_edge(self.net, x, y)
                    .into_iter()
                    .filter(|&(a, c)| self.net.has_edge(a, c)),
            );
        }
        let targets: Vec<_> = targets.into_iter().collect();
        enumerate_triads(self.net, &targets)
            .into_iter()
            .filter(|t| {
                self.free_pairs.contains(&t.target_pair())
                    || t.context_edges().iter().any(|e| self.free_pairs.contains(e))
            })
            .collect()
    }

    fn resolve(
        &self,
        mrf: &mut HlMrf,
        l: &CompiledLiteral,
        nodes: &[NodeId; 3],
        latent_domain: &[bool],
    ) -> Option<GroundLiteral> {
        let a = nodes[l.args[0] as usize];
        let b = nodes[l.args[1] as usize];
        let atom = if l.predicate.is_edge() {
            let key = AtomKey::edge(l.predicate, a, b);
            if self.free_pairs.contains(&(a, b)) {
                mrf.atom(&key)?
            } else {
                let sign = self.net.sign(a, b)?;
                let v = match l.predicate {
                    Predicate::Upvote => sign.value(),
                    _ => 1.0 - sign.value(),
                };
                mrf.register_observed(key, v)
            }
        } else {
            if !latent_domain.get(a.index()).copied().unwrap_or(false) {
                return None;
            }
            let key = AtomKey::node(l.predicate, a);
            match self.latent {
                LatentAtoms::Absent => return None,
                LatentAtoms::Free => mrf.atom(&key)?,
                LatentAtoms::Observed(vals) => mrf.register_observed(key, vals.get(l.predicate, a)?),
            }
        };
        Some(GroundLiteral {
            atom,
            negated: l.negated,
        })
    }

    fn instantiate(
        &self,
        mrf: &mut HlMrf,
        rule: &CompiledRule,
        nodes: &[NodeId; 3],
        latent_domain: &[bool],
    ) {
        let mut body = Vec::with_capacity(rule.body.len());
        for l in &rule.body {
            match self.resolve(mrf, l, nodes, latent_domain) {
                Some(g) => body.push(g),
                None => return,
            }
        }
        let Some(head) = self.resolve(mrf, &rule.head, nodes, latent_domain) else {
            return;
        };
        if self.scope == GroundScope::TouchingFree {
            let touches = body
                .iter()
                .chain(std::iter::once(&head))
                .any(|g| matches!(g.atom, AtomRef::Free(_)));
            if !touches {
                return;
            }
        }
        mrf.ground_rules.push(GroundRule {
            slot: rule.slot,
            scale: 1.0,
            exponent: rule.exponent,
            body,
            head: Some(head),
        });
    }
}

/// Grounds `rules` over `net` with the edge atoms of `free_pairs` free and
/// every other edge observed at its sign.
pub fn ground(
    rules: &[Rule],
    net: &SignedNetwork,
    free_pairs: &[(NodeId, NodeId)],
) -> Result<HlMrf, PslError> {
    Grounder::new(net)
        .free_pairs(free_pairs.iter().copied())
        .ground(rules)
}
