//! Dependency and evaluation graphs and the monitorability classes.
//!
//! An edge `u -> v` with weight `w` records that the equation of `u` reads
//! `v[k + w]`. Cycle weights decide the class of a specification:
//! a zero-weight closed walk makes it ill-formed, a positive one makes it
//! not efficiently monitorable. Weights are analysed one strongly connected
//! component at a time with Bellman-Ford, and every offending cycle comes
//! with an explicit vertex witness.

use std::collections::{HashSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::program::{Edge, Program, StreamId};
use crate::specdsl::{NodeId, Specification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DepEdge {
    pub from: usize,
    pub to: usize,
    pub weight: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DependencyGraph {
    /// Stream names in name order; consts have no vertex.
    pub vertices: Vec<String>,
    /// Node of each vertex.
    pub placement: Vec<NodeId>,
    pub edges: Vec<DepEdge>,
}

impl DependencyGraph {
    pub fn from_program(p: &Program) -> DependencyGraph {
        DependencyGraph {
            vertices: p.streams.iter().map(|s| s.name.clone()).collect(),
            placement: p.streams.iter().map(|s| p.node_name(s.node).clone()).collect(),
            edges: p.edges.iter().map(|e| DepEdge { from: e.from.ix(), to: e.to.ix(), weight: e.weight }).collect(),
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == name)
    }

    /// Edges as `(from, to, weight)` name triples, sorted.
    pub fn named_edges(&self) -> Vec<(String, String, i64)> {
        let mut v: Vec<_> =
            self.edges.iter().map(|e| (self.vertices[e.from].clone(), self.vertices[e.to].clone(), e.weight)).collect();
        v.sort();
        v
    }

    /// Strongly connected components that contain a cycle.
    pub fn nontrivial_sccs(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), i64>::new();
        let ix: Vec<_> = (0..self.vertices.len()).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(ix[e.from], ix[e.to], e.weight);
        }
        let self_loop: HashSet<usize> = self.edges.iter().filter(|e| e.from == e.to).map(|e| e.from).collect();
        tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
                c.sort();
                c
            })
            .filter(|c| c.len() > 1 || self_loop.contains(&c[0]))
            .collect()
    }
}

pub fn build_dependency_graph(spec: &Specification) -> DependencyGraph {
    DependencyGraph::from_program(&Program::new(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleReason {
    /// The cycle itself weighs zero.
    Zero,
    /// A positive and a negative cycle in one component; together they
    /// close a zero-weight walk.
    CombinesToZero,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cycle {
    /// Vertices in edge order; the last one reads the first.
    pub streams: Vec<String>,
    pub weight: i64,
    pub reason: CycleReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MonitorabilityReport {
    pub well_formed: bool,
    pub efficiently_monitorable: bool,
    pub decentralized_efficiently_monitorable: bool,
    pub max_future_ref: u64,
    pub offending_cycles: Vec<Cycle>,
}

/// Weight analysis only; placement is ignored.
pub fn check_well_formed(g: &DependencyGraph) -> MonitorabilityReport {
    let mut report = MonitorabilityReport {
        well_formed: true,
        efficiently_monitorable: true,
        decentralized_efficiently_monitorable: false,
        max_future_ref: g.edges.iter().map(|e| e.weight.max(0) as u64).max().unwrap_or(0),
        offending_cycles: Vec::new(),
    };
    for comp in g.nontrivial_sccs() {
        let edges: Vec<DepEdge> = g
            .edges
            .iter()
            .filter(|e| comp.binary_search(&e.from).is_ok() && comp.binary_search(&e.to).is_ok())
            .copied()
            .collect();
        let pos = signed_cycle(&comp, &edges, 1);
        let neg = signed_cycle(&comp, &edges, -1);
        let name = |c: Vec<usize>| c.into_iter().map(|v| g.vertices[v].clone()).collect::<Vec<_>>();
        match (pos, neg) {
            (Some((pc, pw)), Some((nc, nw))) => {
                report.well_formed = false;
                report.efficiently_monitorable = false;
                report.offending_cycles.push(Cycle {
                    streams: name(pc),
                    weight: pw,
                    reason: CycleReason::CombinesToZero,
                });
                report.offending_cycles.push(Cycle {
                    streams: name(nc),
                    weight: nw,
                    reason: CycleReason::CombinesToZero,
                });
            }
            (pos, _) => {
                // At most one sign is present, so potentials exist for the
                // other orientation and zero cycles are the tight ones.
                let sign = if pos.is_some() { -1 } else { 1 };
                if let Some(zc) = zero_cycle(&comp, &edges, sign) {
                    report.well_formed = false;
                    report.efficiently_monitorable = false;
                    report.offending_cycles.push(Cycle { streams: name(zc), weight: 0, reason: CycleReason::Zero });
                }
                if let Some((pc, pw)) = pos {
                    report.efficiently_monitorable = false;
                    report.offending_cycles.push(Cycle {
                        streams: name(pc),
                        weight: pw,
                        reason: CycleReason::Positive,
                    });
                }
            }
        }
    }
    report
}

/// Full classification under the placement recorded in `g`.
pub fn classify(g: &DependencyGraph) -> MonitorabilityReport {
    let mut r = check_well_formed(g);
    r.decentralized_efficiently_monitorable = r.efficiently_monitorable
        && g.nontrivial_sccs().iter().all(|c| c.iter().all(|v| g.placement[*v] == g.placement[c[0]]));
    r
}

pub fn classify_spec(spec: &Specification) -> MonitorabilityReport {
    classify(&build_dependency_graph(spec))
}

/// Finds a cycle whose weight has the given sign (`1` positive, `-1`
/// negative) by longest-path Bellman-Ford on `sign * weight`.
fn signed_cycle(comp: &[usize], edges: &[DepEdge], sign: i64) -> Option<(Vec<usize>, i64)> {
    let local = |v: usize| comp.binary_search(&v).expect("vertex in component");
    let n = comp.len();
    let mut dist = vec![0i64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for _ in 0..=n {
        last = None;
        for (i, e) in edges.iter().enumerate() {
            let (u, v) = (local(e.from), local(e.to));
            if dist[u] + sign * e.weight > dist[v] {
                dist[v] = dist[u] + sign * e.weight;
                pred[v] = Some(i);
                last = Some(v);
            }
        }
        last?;
    }
    // Walk back far enough to be on the cycle, then read it off.
    let mut x = last?;
    for _ in 0..n {
        x = local(edges[pred[x]?].from);
    }
    let mut cyc_edges = Vec::new();
    let mut y = x;
    loop {
        let e = edges[pred[y]?];
        cyc_edges.push(e);
        y = local(e.from);
        if y == x {
            break;
        }
    }
    cyc_edges.reverse();
    let weight = cyc_edges.iter().map(|e| e.weight).sum();
    Some((cyc_edges.iter().map(|e| e.from).collect(), weight))
}

/// With potentials from longest paths on `sign * weight` (which must have
/// no positive cycle), a cycle has weight zero iff all its edges are tight.
fn zero_cycle(comp: &[usize], edges: &[DepEdge], sign: i64) -> Option<Vec<usize>> {
    let local = |v: usize| comp.binary_search(&v).expect("vertex in component");
    let n = comp.len();
    let mut dist = vec![0i64; n];
    for _ in 0..n {
        let mut changed = false;
        for e in edges {
            let (u, v) = (local(e.from), local(e.to));
            if dist[u] + sign * e.weight > dist[v] {
                dist[v] = dist[u] + sign * e.weight;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let tight: Vec<&DepEdge> =
        edges.iter().filter(|e| dist[local(e.from)] + sign * e.weight == dist[local(e.to)]).collect();
    // Look for a tight path from some vertex back to itself.
    for start in 0..n {
        let mut prev: Vec<Option<usize>> = vec![None; n];
        let mut queue = VecDeque::from([start]);
        let mut seen = vec![false; n];
        while let Some(u) = queue.pop_front() {
            for e in tight.iter().filter(|e| local(e.from) == u) {
                let v = local(e.to);
                if v == start {
                    let mut path = vec![comp[u]];
                    let mut x = u;
                    while x != start {
                        x = prev[x].expect("bfs tree");
                        path.push(comp[x]);
                    }
                    path.reverse();
                    return Some(path);
                }
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
    }
    None
}

/// The unrolling of a dependency graph over `len` ticks.
#[derive(Debug, Clone)]
pub struct EvaluationGraph {
    pub len: u64,
    pub streams: usize,
    pub edges: Vec<Edge>,
}

impl EvaluationGraph {
    pub fn new(p: &Program, len: u64) -> EvaluationGraph {
        assert!(len >= 1, "trace length must be positive");
        EvaluationGraph { len, streams: p.len(), edges: p.edges.clone() }
    }

    /// Instant variables `u[k]` reads, as `(stream, index)` pairs.
    pub fn successors(&self, u: StreamId, k: u64) -> Vec<(StreamId, u64)> {
        self.edges
            .iter()
            .filter(|e| e.from == u)
            .filter_map(|e| {
                let j = k as i64 + e.weight;
                (j >= 0 && (j as u64) < self.len).then_some((e.to, j as u64))
            })
            .collect()
    }

    pub fn has_edge(&self, from: (StreamId, u64), to: (StreamId, u64)) -> bool {
        self.successors(from.0, from.1).contains(&to)
    }

    /// All instant variables with every dependency before its dependents,
    /// or `None` if the unrolling has a cycle.
    pub fn topological_order(&self) -> Option<Vec<(StreamId, u64)>> {
        let m = self.len as usize;
        let n = self.streams;
        let at = |s: usize, k: usize| s * m + k;
        let mut pending = vec![0u32; n * m];
        let mut readers: Vec<Vec<Edge>> = vec![Vec::new(); n];
        for e in &self.edges {
            readers[e.to.ix()].push(*e);
            for k in 0..m as i64 {
                let j = k + e.weight;
                if j >= 0 && j < m as i64 {
                    pending[at(e.from.ix(), k as usize)] += 1;
                }
            }
        }
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        for s in 0..n {
            for k in 0..m {
                if pending[at(s, k)] == 0 {
                    queue.push_back((s, k));
                }
            }
        }
        let mut order = Vec::with_capacity(n * m);
        while let Some((s, k)) = queue.pop_front() {
            order.push((StreamId(s as u32), k as u64));
            for e in &readers[s] {
                let i = k as i64 - e.weight;
                if i >= 0 && i < m as i64 {
                    let slot = &mut pending[at(e.from.ix(), i as usize)];
                    *slot -= 1;
                    if *slot == 0 {
                        queue.push_back((e.from.ix(), i as usize));
                    }
                }
            }
        }
        (order.len() == n * m).then_some(order)
    }
}

/// Horizon after which no reader asks for `s[t]` any more:
/// `max(0, max over readers r of (-w + dist(node(r), node(s))))`.
pub fn bref(p: &Program, s: StreamId, dist: impl Fn(&NodeId, &NodeId) -> u64) -> u64 {
    let home = p.node_name(p.node_of(s));
    p.dependents(s)
        .iter()
        .map(|e| -e.weight + dist(p.node_name(p.node_of(e.from)), home) as i64)
        .max()
        .unwrap_or(0)
        .max(0) as u64
}
