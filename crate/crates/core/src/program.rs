//! Index-based form of a specification used by the monitors and analyses.
//!
//! Streams are numbered in name order, nodes in [`NodeId`] order, and
//! constant names are inlined into the expressions.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::specdsl::{Comm, NodeId, Specification, StreamKind, Term};
use crate::value::{DataType, Func, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamId(pub u32);

impl StreamId {
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeIdx(pub u32);

impl NodeIdx {
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Value),
    Var(StreamId),
    Offset { stream: StreamId, offset: i64, default: Value },
    Apply(Func, Vec<Expr>),
}

#[derive(Debug, Clone)]
pub struct StreamInfo {
    pub name: String,
    pub kind: StreamKind,
    pub dtype: DataType,
    pub node: NodeIdx,
    pub comm: Comm,
    pub expr: Option<Expr>,
}

/// One reference `from` reads `to[k + weight]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: StreamId,
    pub to: StreamId,
    pub weight: i64,
}

#[derive(Debug, Clone)]
pub struct Program {
    pub streams: Vec<StreamInfo>,
    pub nodes: Vec<NodeId>,
    /// One entry per stream reference occurrence.
    pub edges: Vec<Edge>,
    by_name: HashMap<String, StreamId>,
    /// Edges grouped by `from`.
    out_edges: Vec<Vec<Edge>>,
    /// Edges grouped by `to`.
    in_edges: Vec<Vec<Edge>>,
}

impl Program {
    pub fn new(spec: &Specification) -> Program {
        let signals: Vec<_> = spec.signals().collect();
        let by_name: HashMap<String, StreamId> =
            signals.iter().enumerate().map(|(i, s)| (s.name.clone(), StreamId(i as u32))).collect();
        let nodes: Vec<NodeId> = spec.nodes.iter().cloned().collect();
        let node_ix = |n: &NodeId| NodeIdx(nodes.iter().position(|m| m == n).expect("node listed") as u32);

        let mut streams = Vec::with_capacity(signals.len());
        let mut edges = Vec::new();
        for (i, s) in signals.iter().enumerate() {
            let expr = spec.equations.get(&s.name).map(|t| compile(t, spec, &by_name));
            if let Some(e) = &expr {
                collect_edges(e, StreamId(i as u32), &mut edges);
            }
            streams.push(StreamInfo {
                name: s.name.clone(),
                kind: s.kind,
                dtype: s.dtype,
                node: node_ix(&s.node),
                comm: s.comm,
                expr,
            });
        }
        let mut out_edges = vec![Vec::new(); streams.len()];
        let mut in_edges = vec![Vec::new(); streams.len()];
        for e in &edges {
            out_edges[e.from.ix()].push(*e);
            in_edges[e.to.ix()].push(*e);
        }
        Program { streams, nodes, edges, by_name, out_edges, in_edges }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<StreamId> {
        self.by_name.get(name).copied()
    }

    pub fn stream(&self, id: StreamId) -> &StreamInfo {
        &self.streams[id.ix()]
    }

    pub fn name(&self, id: StreamId) -> &str {
        &self.streams[id.ix()].name
    }

    pub fn node_of(&self, id: StreamId) -> NodeIdx {
        self.streams[id.ix()].node
    }

    pub fn node_name(&self, n: NodeIdx) -> &NodeId {
        &self.nodes[n.ix()]
    }

    pub fn node_index(&self, n: &NodeId) -> Option<NodeIdx> {
        self.nodes.iter().position(|m| m == n).map(|i| NodeIdx(i as u32))
    }

    pub fn ids(&self) -> impl Iterator<Item = StreamId> {
        (0..self.streams.len() as u32).map(StreamId)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeIdx> {
        (0..self.nodes.len() as u32).map(NodeIdx)
    }

    pub fn inputs(&self) -> impl Iterator<Item = StreamId> + '_ {
        self.ids().filter(|i| self.stream(*i).kind == StreamKind::Input)
    }

    /// References made by the equation of `s`.
    pub fn deps(&self, s: StreamId) -> &[Edge] {
        &self.out_edges[s.ix()]
    }

    /// References to `s` made by other equations.
    pub fn dependents(&self, s: StreamId) -> &[Edge] {
        &self.in_edges[s.ix()]
    }

    /// Remote nodes that read `s`, in node order.
    pub fn consumer_nodes(&self, s: StreamId) -> Vec<NodeIdx> {
        let home = self.node_of(s);
        let mut v: Vec<NodeIdx> =
            self.dependents(s).iter().map(|e| self.node_of(e.from)).filter(|n| *n != home).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Largest positive offset anywhere (0 if none).
    pub fn max_future_ref(&self) -> u64 {
        self.edges.iter().map(|e| e.weight.max(0) as u64).max().unwrap_or(0)
    }

    /// How many ticks past `k` node `n` still reads `s[k]` when
    /// instantiating its own streams: `max(0, max -w)` over local readers.
    pub fn local_keep(&self, s: StreamId, n: NodeIdx) -> u64 {
        self.dependents(s)
            .iter()
            .filter(|e| self.node_of(e.from) == n)
            .map(|e| (-e.weight).max(0) as u64)
            .max()
            .unwrap_or(0)
    }

    /// Smallest offset with which node `n` reads `s`, if it reads it at all.
    pub fn min_local_offset(&self, s: StreamId, n: NodeIdx) -> Option<i64> {
        self.dependents(s).iter().filter(|e| self.node_of(e.from) == n).map(|e| e.weight).min()
    }
}

fn compile(t: &Term, spec: &Specification, ids: &HashMap<String, StreamId>) -> Expr {
    match t {
        Term::Const(v) => Expr::Const(*v),
        Term::Var(n) => match spec.constants.get(n) {
            Some(v) => Expr::Const(*v),
            None => Expr::Var(ids[n]),
        },
        Term::Offset { stream, offset, default } => {
            Expr::Offset { stream: ids[stream], offset: *offset, default: *default }
        }
        Term::Apply(f, args) => Expr::Apply(*f, args.iter().map(|a| compile(a, spec, ids)).collect()),
    }
}

fn collect_edges(e: &Expr, from: StreamId, out: &mut Vec<Edge>) {
    match e {
        Expr::Const(_) => {}
        Expr::Var(s) => out.push(Edge { from, to: *s, weight: 0 }),
        Expr::Offset { stream, offset, .. } => out.push(Edge { from, to: *stream, weight: *offset }),
        Expr::Apply(_, args) => args.iter().for_each(|a| collect_edges(a, from, out)),
    }
}
