//! Decentralized monitoring: per-node monitors driven in lockstep over the
//! simulated network.
//!
//! Each tick every node processes its delivered messages, reads its inputs,
//! instantiates its streams, and evaluates its unresolved terms to a
//! fixpoint. Resolved values of eager streams are pushed to every remote
//! node that reads them; lazy values are sent only on request. Co-located
//! dependencies are read straight from local storage and never produce
//! messages. After the last input tick, future references past the end of
//! the trace take their defaults and the run continues until every queue
//! and every storage of unresolved work is empty.

mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{check_well_formed, DependencyGraph};
use crate::netsim::{DelayModel, DelayTrace, MsgKind, Network, Payload};
use crate::oracle::Valuation;
use crate::program::{NodeIdx, Program, StreamId};
use crate::specdsl::{Comm, Specification, StreamKind};
use crate::terms::{InstantVar, Simplifier};
use crate::value::{EvalError, Value};
use crate::Tick;

pub use state::{LocalMonitor, REntry, Resolution, StepOutput, UEntry};

/// Which strategy streams use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommMode {
    /// As written in the specification.
    #[default]
    Declared,
    Eager,
    Lazy,
}

/// When resolved values are dropped from `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Pruning {
    /// Lazy values are dropped once every consumer confirmed it is done
    /// with them.
    #[default]
    Confirm,
    /// Lazy values are dropped after their request horizon computed with
    /// `bound` as the delay of every remote link; no confirms are sent.
    Ttl { bound: u64 },
    /// Lazy values are never dropped.
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub comm: CommMode,
    pub simplifier: Simplifier,
    pub pruning: Pruning,
    /// Keep a log of every message.
    pub record_messages: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            comm: CommMode::Declared,
            simplifier: Simplifier::Full,
            pruning: Pruning::Confirm,
            record_messages: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("{stream}[{index}]: {source}")]
    Eval { stream: String, index: u64, source: EvalError },
    #[error("request for {stream}[{index}] arrived at tick {tick} after the value was pruned")]
    PrunedRequest { stream: String, index: u64, tick: Tick },
    #[error("no messages in flight at tick {tick} but {unresolved} instant variables are unresolved")]
    Stuck { tick: Tick, unresolved: usize },
    #[error("no progress for too long (tick {tick})")]
    NoProgress { tick: Tick },
    #[error("bad inputs: {0}")]
    Inputs(String),
    #[error("specification is not well-formed")]
    NotWellFormed,
}

/// Per-run static data shared by all local monitors.
#[derive(Debug, Clone)]
pub struct Plan {
    pub program: Program,
    pub simplifier: Simplifier,
    pub pruning: Pruning,
    /// Defined (non-input) streams per node.
    pub local_defined: Vec<Vec<StreamId>>,
    pub local_inputs: Vec<Vec<StreamId>>,
    /// Remote nodes reading each stream.
    pub consumers: Vec<Vec<NodeIdx>>,
    /// `keep[s][n]`: how long past its index node `n` still reads `s`.
    pub keep: Vec<Vec<u64>>,
    /// Request horizon per stream under TTL pruning.
    pub ttl: Vec<u64>,
    /// Remote lazy streams each node reads, with the smallest offset used.
    pub lazy_reads: Vec<Vec<(StreamId, i64)>>,
}

impl Plan {
    pub fn new(program: Program, cfg: &RunConfig) -> Plan {
        let n = program.nodes.len();
        let mut local_defined = vec![Vec::new(); n];
        let mut local_inputs = vec![Vec::new(); n];
        for s in program.ids() {
            let info = program.stream(s);
            if info.kind == StreamKind::Input {
                local_inputs[info.node.ix()].push(s);
            } else {
                local_defined[info.node.ix()].push(s);
            }
        }
        let consumers: Vec<Vec<NodeIdx>> = program.ids().map(|s| program.consumer_nodes(s)).collect();
        let keep: Vec<Vec<u64>> =
            program.ids().map(|s| program.node_ids().map(|nd| program.local_keep(s, nd)).collect()).collect();
        let ttl = program
            .ids()
            .map(|s| match cfg.pruning {
                Pruning::Ttl { bound } => crate::graphs::bref(&program, s, |a, b| if a == b { 0 } else { bound }),
                _ => 0,
            })
            .collect();
        let mut lazy_reads = vec![Vec::new(); n];
        for nd in program.node_ids() {
            for s in program.ids() {
                if program.node_of(s) != nd && program.stream(s).comm == Comm::Lazy {
                    if let Some(w) = program.min_local_offset(s, nd) {
                        lazy_reads[nd.ix()].push((s, w));
                    }
                }
            }
        }
        Plan {
            program,
            simplifier: cfg.simplifier,
            pruning: cfg.pruning,
            local_defined,
            local_inputs,
            consumers,
            keep,
            ttl,
            lazy_reads,
        }
    }
}

/// Applies a [`CommMode`] to a specification.
pub fn with_mode(spec: &Specification, mode: CommMode) -> Specification {
    match mode {
        CommMode::Declared => spec.clone(),
        CommMode::Eager => spec.with_comm(Comm::Eager),
        CommMode::Lazy => spec.with_comm(Comm::Lazy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResolvedEntry {
    pub instantiated_at: Tick,
    pub resolved_at: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TickMetrics {
    pub tick: Tick,
    pub node: NodeIdx,
    pub mem: u64,
    pub msgs_resp: u64,
    pub msgs_req: u64,
    pub msgs_confirm: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub sent_at: Tick,
    pub arrives_at: Tick,
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub kind: MsgKind,
    pub var: InstantVar,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MessageTotals {
    pub resp: u64,
    pub req: u64,
    pub confirm: u64,
}

impl MessageTotals {
    pub fn total(&self) -> u64 {
        self.resp + self.req + self.confirm
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub program: Program,
    pub len: u64,
    /// Every input, define and output stream.
    pub outputs: Valuation,
    /// `resolved[stream][index]`.
    pub resolved: Vec<Vec<ResolvedEntry>>,
    pub metrics: Vec<TickMetrics>,
    pub messages: Vec<MessageRecord>,
    pub totals: MessageTotals,
    /// Totals per stream, indexed by stream id.
    pub per_stream: Vec<MessageTotals>,
    pub trace: DelayTrace,
    /// Tick at which the run became quiescent.
    pub end: Tick,
}

impl RunResult {
    pub fn resolved_at(&self, stream: &str, k: u64) -> Option<Tick> {
        let s = self.program.id(stream)?;
        self.resolved[s.ix()].get(k as usize).map(|e| e.resolved_at)
    }

    /// `resolvedAt - index` for every index of a stream.
    pub fn ttr(&self, stream: &str) -> Vec<u64> {
        let Some(s) = self.program.id(stream) else { return Vec::new() };
        self.resolved[s.ix()].iter().enumerate().map(|(k, e)| e.resolved_at - k as u64).collect()
    }

    /// Peak memory per node.
    pub fn peak_memory(&self) -> Vec<u64> {
        let mut peak = vec![0; self.program.nodes.len()];
        for m in &self.metrics {
            peak[m.node.ix()] = peak[m.node.ix()].max(m.mem);
        }
        peak
    }

    /// Memory samples of one node, indexed by tick.
    pub fn memory_series(&self, node: NodeIdx) -> Vec<u64> {
        self.metrics.iter().filter(|m| m.node == node).map(|m| m.mem).collect()
    }

    pub fn stream_totals(&self, stream: &str) -> MessageTotals {
        self.program.id(stream).map(|s| self.per_stream[s.ix()]).unwrap_or_default()
    }
}

/// Runs the decentralized monitors on `inputs` until quiescence.
pub fn run(
    spec: &Specification,
    inputs: &Valuation,
    model: &DelayModel,
    cfg: &RunConfig,
) -> Result<RunResult, MonitorError> {
    let spec = with_mode(spec, cfg.comm);
    let program = Program::new(&spec);
    if !check_well_formed(&DependencyGraph::from_program(&program)).well_formed {
        return Err(MonitorError::NotWellFormed);
    }
    let m = inputs.len;
    if m == 0 {
        return Err(MonitorError::Inputs("trace length must be positive".into()));
    }
    let mut input_cols: Vec<(StreamId, &[Value])> = Vec::new();
    for s in program.inputs() {
        let info = program.stream(s);
        let col = inputs
            .streams
            .get(&info.name)
            .ok_or_else(|| MonitorError::Inputs(format!("missing input `{}`", info.name)))?;
        if col.len() as u64 != m {
            return Err(MonitorError::Inputs(format!("input `{}` has {} values, expected {m}", info.name, col.len())));
        }
        if let Some(bad) = col.iter().find(|v| v.data_type() != info.dtype) {
            return Err(MonitorError::Inputs(format!("input `{}` holds {bad}, expected {}", info.name, info.dtype)));
        }
        input_cols.push((s, col));
    }

    let plan = Plan::new(program, cfg);
    let prog = &plan.program;
    let n_nodes = prog.nodes.len();
    let mut monitors: Vec<LocalMonitor> = prog.node_ids().map(LocalMonitor::new).collect();
    let mut net = Network::new(model, &prog.nodes);

    let mut values: Vec<Vec<Option<Value>>> = vec![vec![None; m as usize]; prog.len()];
    let mut resolved: Vec<Vec<Option<ResolvedEntry>>> = vec![vec![None; m as usize]; prog.len()];
    let mut metrics = Vec::new();
    let mut messages = Vec::new();
    let mut totals = MessageTotals::default();
    let mut per_stream = vec![MessageTotals::default(); prog.len()];
    let depth = prog.len() as u64 + 1;
    let mut last_progress: Tick = 0;

    let mut now: Tick = 0;
    loop {
        let mut inboxes = net.deliver(now);
        let last = (now + 1 == m).then_some(m);
        let mut progress = !inboxes.is_empty();
        let mut outgoing = Vec::new();
        let mut counts = vec![[0u64; 3]; n_nodes];
        for (ni, mon) in monitors.iter_mut().enumerate() {
            let node = NodeIdx(ni as u32);
            let inbox = inboxes.remove(&node).unwrap_or_default();
            let reads: Vec<(StreamId, Value)> = if now < m {
                plan.local_inputs[ni]
                    .iter()
                    .map(|s| {
                        let col = input_cols.iter().find(|(id, _)| id == s).expect("column").1;
                        (*s, col[now as usize])
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let out = mon.step(&plan, now, &reads, inbox, last)?;
            for r in &out.resolved {
                values[r.var.stream.ix()][r.var.index as usize] = Some(r.value);
                resolved[r.var.stream.ix()][r.var.index as usize] =
                    Some(ResolvedEntry { instantiated_at: r.instantiated_at, resolved_at: r.resolved_at });
            }
            progress |= !out.resolved.is_empty();
            counts[ni] = state::count_kinds(&out.outgoing);
            outgoing.extend(out.outgoing);
        }
        for o in outgoing {
            let msg = net.send(o, now);
            let slot = &mut per_stream[msg.var.stream.ix()];
            match msg.payload {
                Payload::Resp(_) => {
                    totals.resp += 1;
                    slot.resp += 1;
                }
                Payload::Req => {
                    totals.req += 1;
                    slot.req += 1;
                }
                Payload::Confirm => {
                    totals.confirm += 1;
                    slot.confirm += 1;
                }
            }
            if cfg.record_messages {
                messages.push(MessageRecord {
                    sent_at: msg.sent_at,
                    arrives_at: msg.arrives_at,
                    src: msg.src,
                    dst: msg.dst,
                    kind: msg.kind(),
                    var: msg.var,
                });
            }
        }
        for (ni, mon) in monitors.iter().enumerate() {
            metrics.push(TickMetrics {
                tick: now,
                node: NodeIdx(ni as u32),
                mem: mon.memory() as u64,
                msgs_resp: counts[ni][0],
                msgs_req: counts[ni][1],
                msgs_confirm: counts[ni][2],
            });
        }

        if progress {
            last_progress = now;
        }
        if now + 1 >= m && net.in_flight() == 0 {
            if monitors.iter().all(LocalMonitor::is_quiescent) {
                break;
            }
            let unresolved = monitors.iter().map(|x| x.u.len()).sum();
            return Err(MonitorError::Stuck { tick: now, unresolved });
        }
        let patience = net.trace().max_delay() * depth * m + 64;
        if now >= m && now - last_progress > patience {
            return Err(MonitorError::NoProgress { tick: now });
        }
        now += 1;
    }

    let mut outputs = Valuation::new(m);
    let mut resolved_out = Vec::with_capacity(prog.len());
    for s in prog.ids() {
        let vals: Option<Vec<Value>> = values[s.ix()].iter().copied().collect();
        let res: Option<Vec<ResolvedEntry>> = resolved[s.ix()].iter().copied().collect();
        match (vals, res) {
            (Some(v), Some(r)) => {
                outputs.insert(prog.name(s), v);
                resolved_out.push(r);
            }
            _ => return Err(MonitorError::Stuck { tick: now, unresolved: 1 }),
        }
    }
    Ok(RunResult {
        program: plan.program.clone(),
        len: m,
        outputs,
        resolved: resolved_out,
        metrics,
        messages,
        totals,
        per_stream,
        trace: net.into_trace(),
        end: now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::evaluate;
    use crate::specdsl::parse;

    fn acc_root(placement: (&str, &str), acc_comm: &str) -> Specification {
        let (a, b) = placement;
        parse(&format!(
            "@{a}{{ input num y\n define int acc {acc_comm} = y + root[-1|0] }}\n@{b}{{ input bool reset\n output int root = if reset then 0 else acc }}"
        ))
        .unwrap()
    }

    fn inputs(reset: &[bool]) -> Valuation {
        let mut v = Valuation::new(reset.len() as u64);
        v.insert("reset", reset.iter().map(|b| Value::Bool(*b)).collect());
        v.insert("y", (0..reset.len()).map(|i| Value::Num(i as f64 + 1.0)).collect());
        v
    }

    #[test]
    fn eager_resolution_times() {
        let spec = acc_root(("1", "2"), "");
        let r = run(&spec, &inputs(&[false; 4]), &DelayModel::constant(1), &RunConfig::default()).unwrap();
        assert_eq!(r.resolved_at("root", 0), Some(1));
        assert_eq!(r.outputs, evaluate(&spec, &inputs(&[false; 4])).unwrap());
    }

    #[test]
    fn lazy_takes_two_legs() {
        let spec = acc_root(("1", "2"), "lazy");
        let r = run(&spec, &inputs(&[false; 4]), &DelayModel::constant(1), &RunConfig::default()).unwrap();
        assert_eq!(r.resolved_at("root", 0), Some(2));
        assert_eq!(r.outputs, evaluate(&spec, &inputs(&[false; 4])).unwrap());
    }

    #[test]
    fn lazy_best_case_needs_no_message() {
        let spec = acc_root(("1", "2"), "lazy");
        let cfg = RunConfig { record_messages: true, ..RunConfig::default() };
        let r = run(&spec, &inputs(&[true, false]), &DelayModel::constant(1), &cfg).unwrap();
        assert_eq!(r.resolved_at("root", 0), Some(0));
        let acc = r.program.id("acc").unwrap();
        assert!(!r.messages.iter().any(|m| m.var == InstantVar::new(acc, 0) && m.kind != MsgKind::Confirm));
    }

    #[test]
    fn centralized_degenerate_case() {
        let spec = acc_root(("1", "1"), "");
        let r = run(&spec, &inputs(&[false; 6]), &DelayModel::constant(1), &RunConfig::default()).unwrap();
        for s in ["acc", "root", "y", "reset"] {
            assert!(r.ttr(s).iter().all(|t| *t == 0), "{s}");
        }
        assert_eq!(r.totals.total(), 0);
    }

    #[test]
    fn mutual_remote_recursion_resolves_at_twice_the_index() {
        let spec = parse("@1{output num a eval = b[-1|0]} \n @2{output num b eval = a[-1|0]}").unwrap();
        let r = run(&spec, &Valuation::new(20), &DelayModel::constant(2), &RunConfig::default()).unwrap();
        for n in 0..20u64 {
            assert_eq!(r.resolved_at("a", n), Some(2 * n));
            assert_eq!(r.resolved_at("b", n), Some(2 * n));
        }
    }

    #[test]
    fn future_references_finalize_to_defaults() {
        let spec = parse("@1{ input int a }\n@2{ output int b = a[2|0] + b[-1|0] }").unwrap();
        let mut inp = Valuation::new(3);
        inp.insert("a", vec![Value::Int(1), Value::Int(2), Value::Int(3)]);
        for comm in [CommMode::Eager, CommMode::Lazy] {
            let cfg = RunConfig { comm, ..RunConfig::default() };
            let r = run(&spec, &inp, &DelayModel::constant(1), &cfg).unwrap();
            assert_eq!(r.outputs.streams["b"], vec![Value::Int(3); 3]);
        }
    }

    #[test]
    fn ttl_pruning_sends_no_confirms() {
        let spec = acc_root(("1", "2"), "lazy");
        let cfg = RunConfig { pruning: Pruning::Ttl { bound: 3 }, ..RunConfig::default() };
        let r = run(&spec, &inputs(&[false; 30]), &DelayModel::constant(3), &cfg).unwrap();
        assert_eq!(r.totals.confirm, 0);
        assert_eq!(r.outputs, evaluate(&spec, &inputs(&[false; 30])).unwrap());
    }

    #[test]
    fn ttl_too_small_is_detected() {
        let spec = parse("@1{ input int x lazy }\n@2{ output int y = x[-1|0] }").unwrap();
        let mut inp = Valuation::new(10);
        inp.insert("x", vec![Value::Int(1); 10]);
        let cfg = RunConfig { pruning: Pruning::Ttl { bound: 1 }, ..RunConfig::default() };
        let err = run(&spec, &inp, &DelayModel::constant(4), &cfg).unwrap_err();
        assert!(matches!(err, MonitorError::PrunedRequest { .. }), "{err}");
    }

    #[test]
    fn memory_stays_bounded_with_confirms() {
        // Acyclic across nodes: the backlog stays bounded.
        let spec = parse("@1{ input num y\n define num acc lazy = y + acc[-1|0] }\n@2{ input bool reset\n output num root = if reset then 0 else acc }").unwrap();
        let r = run(&spec, &inputs(&[false; 400]), &DelayModel::constant(2), &RunConfig::default()).unwrap();
        let peak = r.peak_memory();
        assert!(peak.iter().all(|p| *p < 20), "{peak:?}");
        assert!(r.totals.confirm > 0);
    }
}
