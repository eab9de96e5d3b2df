//! Petri nets synthesized from operation pre- and postconditions.

mod classify;
mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{DomainSpec, OperationSchema};
use crate::term::Term;

pub use classify::{classify_pair, or_rule, Branching, OrRule};
use classify::shares_key;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("enable dependencies form a cycle through {}", .0.iter().collect::<String>())]
    CyclicEnable(Vec<char>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Enable,
    Retry,
}

/// A dependency between two operations, with the predicates that witness it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DependencyEdge {
    pub from: char,
    pub to: char,
    pub kind: EdgeKind,
    pub witnesses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub label: char,
    pub name: String,
    /// Head with lowercased parameters, e.g. `register(c,v,t,r)`.
    pub signature: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlaceId {
    Start,
    S(usize),
    End,
}

impl fmt::Display for PlaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlaceId::Start => f.write_str("start"),
            PlaceId::End => f.write_str("end"),
            PlaceId::S(k) => write!(f, "s({k})"),
        }
    }
}

impl Serialize for PlaceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Place {
    pub id: PlaceId,
    pub producers: Vec<char>,
    pub consumers: Vec<char>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Place(PlaceId),
    Transition(char),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Place(p) => write!(f, "{p}"),
            Node::Transition(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// An origin transition whose successors include mutually exclusive alternatives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrFork {
    pub origin: char,
    pub branches: Vec<char>,
}

/// Alternative producers merging into one place consumed by `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrJoin {
    pub target: char,
    pub producers: Vec<char>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PetriNet {
    pub transitions: Vec<Transition>,
    /// `start`, then `s(1)..`, then `end`.
    pub places: Vec<Place>,
    pub arcs: Vec<(Node, Node)>,
    pub or_forks: Vec<OrFork>,
    pub or_joins: Vec<OrJoin>,
    #[serde(skip)]
    pub raw_edges: Vec<DependencyEdge>,
    #[serde(skip)]
    pub edges: Vec<DependencyEdge>,
    /// Label pairs `(x, y)` with `x < y` that classify as or.
    #[serde(skip)]
    pub exclusive_pairs: BTreeSet<(char, char)>,
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

impl PetriNet {
    pub fn transition(&self, label: char) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.label == label)
    }

    pub fn place(&self, id: PlaceId) -> Option<&Place> {
        self.places.iter().find(|p| p.id == id)
    }

    /// Input places of a transition, in place order.
    pub fn inputs(&self, label: char) -> Vec<PlaceId> {
        self.places.iter().filter(|p| p.consumers.contains(&label)).map(|p| p.id).collect()
    }

    pub fn outputs(&self, label: char) -> Vec<PlaceId> {
        self.places.iter().filter(|p| p.producers.contains(&label)).map(|p| p.id).collect()
    }

    pub fn entries(&self) -> Vec<char> {
        self.place(PlaceId::Start).map(|p| p.consumers.clone()).unwrap_or_default()
    }

    pub fn reaches_end(&self, label: char) -> bool {
        self.place(PlaceId::End).is_some_and(|p| p.producers.contains(&label))
    }

    /// Signature text for a node as used in listings: `a:register(c,v,t,r)`.
    pub(crate) fn node_text(&self, label: char) -> String {
        match self.transition(label) {
            Some(t) => format!("{}:{}", t.label, t.signature),
            None => label.to_string(),
        }
    }

    pub(crate) fn signature(&self, label: char) -> String {
        self.transition(label).map(|t| t.signature.clone()).unwrap_or_else(|| label.to_string())
    }

    fn push_arcs(&mut self) {
        let mut arcs = Vec::new();
        for p in &self.places {
            if p.id == PlaceId::Start {
                arcs.extend(p.consumers.iter().map(|&c| (Node::Place(p.id), Node::Transition(c))));
            }
        }
        let mut out: Vec<(char, PlaceId)> = Vec::new();
        let mut inc: Vec<(PlaceId, char)> = Vec::new();
        for p in self.places.iter().filter(|p| matches!(p.id, PlaceId::S(_))) {
            out.extend(p.producers.iter().map(|&t| (t, p.id)));
            inc.extend(p.consumers.iter().map(|&t| (p.id, t)));
        }
        out.sort();
        inc.sort();
        arcs.extend(out.into_iter().map(|(t, p)| (Node::Transition(t), Node::Place(p))));
        arcs.extend(inc.into_iter().map(|(p, t)| (Node::Place(p), Node::Transition(t))));
        if let Some(end) = self.place(PlaceId::End) {
            arcs.extend(end.producers.iter().map(|&t| (Node::Transition(t), Node::Place(PlaceId::End))));
        }
        self.arcs = arcs;
    }
}

fn witnesses<'a>(xs: impl Iterator<Item = &'a Term>, ys: impl Iterator<Item = &'a Term>) -> Vec<String> {
    let ys: Vec<(&str, usize)> = ys.filter_map(Term::key).collect();
    let mut out = BTreeSet::new();
    for x in xs {
        if let Some(k) = x.key() {
            if ys.contains(&k) {
                out.insert(format!("{}/{}", k.0, k.1));
            }
        }
    }
    out.into_iter().collect()
}

/// Raw enable and retry edges between every ordered pair of operations.
pub fn raw_edges(spec: &DomainSpec) -> Vec<DependencyEdge> {
    let ops = spec.labeled();
    let mut out = Vec::new();
    for a in &ops {
        for b in &ops {
            let w = witnesses(a.add_atoms(), b.positive_preconds());
            if !w.is_empty() {
                out.push(DependencyEdge { from: a.label, to: b.label, kind: EdgeKind::Enable, witnesses: w });
            }
            if a.label == b.label {
                continue;
            }
            let w = witnesses(a.delete_atoms(), b.add_atoms());
            if !w.is_empty() {
                out.push(DependencyEdge { from: a.label, to: b.label, kind: EdgeKind::Retry, witnesses: w });
            }
        }
    }
    out
}

/// Enable successors of each label.
fn enable_graph(edges: &[DependencyEdge]) -> BTreeMap<char, BTreeSet<char>> {
    let mut g: BTreeMap<char, BTreeSet<char>> = BTreeMap::new();
    for e in edges.iter().filter(|e| e.kind == EdgeKind::Enable) {
        g.entry(e.from).or_default().insert(e.to);
    }
    g
}

fn find_cycle(g: &BTreeMap<char, BTreeSet<char>>) -> Option<Vec<char>> {
    fn visit(
        n: char,
        g: &BTreeMap<char, BTreeSet<char>>,
        state: &mut BTreeMap<char, u8>,
        stack: &mut Vec<char>,
    ) -> Option<Vec<char>> {
        state.insert(n, 1);
        stack.push(n);
        for &m in g.get(&n).into_iter().flatten() {
            match state.get(&m).copied().unwrap_or(0) {
                1 => {
                    let at = stack.iter().position(|&x| x == m).unwrap_or(0);
                    return Some(stack[at..].to_vec());
                }
                0 => {
                    if let Some(c) = visit(m, g, state, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        state.insert(n, 2);
        None
    }
    let mut state = BTreeMap::new();
    for &n in g.keys() {
        if state.get(&n).copied().unwrap_or(0) == 0 {
            let mut stack = Vec::new();
            if let Some(c) = visit(n, g, &mut state, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Nodes reachable from `n` by one or more enable steps.
fn reachable(g: &BTreeMap<char, BTreeSet<char>>, n: char) -> BTreeSet<char> {
    let mut seen = BTreeSet::new();
    let mut todo: Vec<char> = g.get(&n).into_iter().flatten().copied().collect();
    while let Some(m) = todo.pop() {
        if seen.insert(m) {
            todo.extend(g.get(&m).into_iter().flatten().copied());
        }
    }
    seen
}

/// Enable edges after transitive reduction, then retry edges not bypassed by another retry target.
pub fn derive_edges(spec: &DomainSpec) -> Result<Vec<DependencyEdge>, NetError> {
    prune(&raw_edges(spec))
}

fn prune(raw: &[DependencyEdge]) -> Result<Vec<DependencyEdge>, NetError> {
    let g = enable_graph(raw);
    if let Some(c) = find_cycle(&g) {
        return Err(NetError::CyclicEnable(c));
    }
    let reach: BTreeMap<char, BTreeSet<char>> = g.keys().map(|&n| (n, reachable(&g, n))).collect();
    let via = |u: char, v: char| {
        g.get(&u).into_iter().flatten().any(|&w| w != v && reach.get(&w).is_some_and(|r| r.contains(&v)))
    };
    let mut out: Vec<DependencyEdge> =
        raw.iter().filter(|e| e.kind == EdgeKind::Enable && !via(e.from, e.to)).cloned().collect();
    for e in raw.iter().filter(|e| e.kind == EdgeKind::Retry) {
        let bypassed = raw.iter().any(|o| {
            o.kind == EdgeKind::Retry
                && o.from == e.from
                && o.to != e.to
                && reach.get(&o.to).is_some_and(|r| r.contains(&e.to))
        });
        if !bypassed {
            out.push(e.clone());
        }
    }
    Ok(out)
}

/// Producers related through `consumer`: redundant adds, or one deletes what the consumer adds.
fn or_join_related(p: &OperationSchema, q: &OperationSchema, consumer: &OperationSchema) -> bool {
    shares_key(p.add_atoms(), q.add_atoms())
        || shares_key(p.delete_atoms(), consumer.add_atoms())
        || shares_key(q.delete_atoms(), consumer.add_atoms())
}

/// Partition into classes under the transitive closure of the or relation.
fn or_classes(members: &[char], spec: &DomainSpec) -> Vec<Vec<char>> {
    let mut classes: Vec<Vec<char>> = Vec::new();
    for &m in members {
        let op = spec.by_label(m).expect("label of a spec operation");
        let hits: Vec<usize> = classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|&x| classify_pair(op, spec.by_label(x).expect("label")) == Branching::Or))
            .map(|(i, _)| i)
            .collect();
        let mut merged = vec![m];
        for &i in hits.iter().rev() {
            merged.extend(classes.remove(i));
        }
        merged.sort();
        classes.push(merged);
    }
    classes.sort();
    classes
}

pub fn synthesize(spec: &DomainSpec) -> Result<PetriNet, NetError> {
    let raw = raw_edges(spec);
    let edges = prune(&raw)?;
    let ops = spec.labeled();
    let op = |l: char| spec.by_label(l).expect("label of a spec operation");

    let mut successors: BTreeMap<char, Vec<char>> = ops.iter().map(|o| (o.label, Vec::new())).collect();
    for e in &edges {
        let s = successors.entry(e.from).or_default();
        if !s.contains(&e.to) {
            s.push(e.to);
        }
    }
    successors.values_mut().for_each(|s| s.sort());

    // Candidate places (producer, consumer class), in numbering scan order.
    let mut candidates: Vec<(char, Vec<char>)> = Vec::new();
    let mut or_forks = Vec::new();
    for (&p, succ) in &successors {
        for class in or_classes(succ, spec) {
            if class.len() > 1 {
                or_forks.push(OrFork { origin: p, branches: class.clone() });
            }
            candidates.push((p, class));
        }
    }

    // Merge candidates with the same consumers whose producers are or-join related.
    let mut group: Vec<usize> = (0..candidates.len()).collect();
    fn root(group: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while group[r] != r {
            r = group[r];
        }
        group[i] = r;
        r
    }
    for i in 0..candidates.len() {
        for j in i + 1..candidates.len() {
            let (pi, ci) = &candidates[i];
            let (pj, cj) = &candidates[j];
            if ci != cj || pi == pj {
                continue;
            }
            if ci.iter().any(|&c| or_join_related(op(*pi), op(*pj), op(c))) {
                let (a, b) = (root(&mut group, i), root(&mut group, j));
                group[b.max(a)] = a.min(b);
            }
        }
    }
    let mut number: BTreeMap<usize, usize> = BTreeMap::new();
    let mut places: Vec<Place> = Vec::new();
    for (i, (producer, consumers)) in candidates.iter().enumerate() {
        let r = root(&mut group, i);
        let k = match number.get(&r) {
            Some(&k) => k,
            None => {
                let k = number.len() + 1;
                number.insert(r, k);
                places.push(Place { id: PlaceId::S(k), producers: Vec::new(), consumers: consumers.clone() });
                k
            }
        };
        let place = &mut places[k - 1];
        if !place.producers.contains(producer) {
            place.producers.push(*producer);
            place.producers.sort();
        }
    }

    let added: BTreeSet<(String, usize)> =
        ops.iter().flat_map(|o| o.add_atoms()).filter_map(Term::key).map(|(n, a)| (n.to_string(), a)).collect();
    let entries: Vec<char> = ops
        .iter()
        .filter(|o| o.positive_preconds().filter_map(Term::key).all(|(n, a)| !added.contains(&(n.to_string(), a))))
        .map(|o| o.label)
        .collect();
    let terminals: Vec<char> = ops.iter().filter(|o| successors[&o.label].is_empty()).map(|o| o.label).collect();

    let mut or_joins = Vec::new();
    for p in &places {
        if p.producers.len() < 2 {
            continue;
        }
        let closes_fork = or_forks.iter().any(|f| p.producers.iter().all(|x| f.branches.contains(x)));
        if closes_fork {
            continue;
        }
        for &c in &p.consumers {
            or_joins.push(OrJoin { target: c, producers: p.producers.clone() });
        }
    }
    or_joins.sort_by_key(|j| j.target);

    let mut all = vec![Place { id: PlaceId::Start, producers: Vec::new(), consumers: entries }];
    all.extend(places);
    all.push(Place { id: PlaceId::End, producers: terminals, consumers: Vec::new() });

    let mut net = PetriNet {
        transitions: ops
            .iter()
            .map(|o| Transition { label: o.label, name: o.name.clone(), signature: o.signature() })
            .collect(),
        places: all,
        arcs: Vec::new(),
        or_forks,
        or_joins,
        raw_edges: raw,
        edges,
        exclusive_pairs: ops
            .iter()
            .flat_map(|a| ops.iter().map(move |b| (a, b)))
            .filter(|(a, b)| a.label < b.label && classify_pair(a, b) == Branching::Or)
            .map(|(a, b)| (a.label, b.label))
            .collect(),
        diagnostics: Vec::new(),
    };
    net.push_arcs();
    net.diagnostics = diagnose(&net);
    Ok(net)
}

fn diagnose(net: &PetriNet) -> Vec<String> {
    let mut out = Vec::new();
    let forward = |from: Node| -> BTreeSet<Node> {
        let mut seen = BTreeSet::from([from]);
        let mut todo = vec![from];
        while let Some(n) = todo.pop() {
            for (a, b) in &net.arcs {
                if *a == n && seen.insert(*b) {
                    todo.push(*b);
                }
            }
        }
        seen
    };
    let from_start = forward(Node::Place(PlaceId::Start));
    for t in &net.transitions {
        let n = Node::Transition(t.label);
        let to_end = forward(n).contains(&Node::Place(PlaceId::End));
        if !from_start.contains(&n) || !to_end {
            out.push(format!("transition {}:{} is not on a path from start to end", t.label, t.name));
        }
    }
    out
}
