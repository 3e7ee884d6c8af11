//! One node's local monitor.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{MonitorError, Plan, Pruning};
use crate::netsim::{Message, MsgKind, Outgoing, Payload};
use crate::program::{NodeIdx, StreamId};
use crate::specdsl::Comm;
use crate::terms::{finalize, instantiate, reduce, ITerm, InstantVar};
use crate::value::Value;
use crate::Tick;

#[derive(Debug, Clone)]
pub struct UEntry {
    pub term: ITerm,
    pub instantiated_at: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct REntry {
    pub value: Value,
    /// Tick the value was resolved here or received from its owner.
    pub at: Tick,
    pub local: bool,
}

/// A value this node resolved during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub var: InstantVar,
    pub value: Value,
    pub instantiated_at: Tick,
    pub resolved_at: Tick,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub outgoing: Vec<Outgoing>,
    pub resolved: Vec<Resolution>,
}

/// Storages of one node: unresolved terms `U`, resolved values `R`,
/// pending requests `P` and awaited responses `W`.
#[derive(Debug, Clone)]
pub struct LocalMonitor {
    pub node: NodeIdx,
    pub u: BTreeMap<(u64, StreamId), UEntry>,
    pub r: HashMap<InstantVar, REntry>,
    pub p: BTreeMap<InstantVar, BTreeSet<NodeIdx>>,
    pub w: BTreeSet<InstantVar>,
    /// Highest index each consumer confirmed, per lazy local stream.
    confirmed: HashMap<(StreamId, NodeIdx), u64>,
    /// Last confirm sent per remote lazy stream.
    confirm_sent: HashMap<StreamId, u64>,
    /// Next index to instantiate (everything below is instantiated).
    frontier: u64,
    len: Option<u64>,
}

impl LocalMonitor {
    pub fn new(node: NodeIdx) -> Self {
        LocalMonitor {
            node,
            u: BTreeMap::new(),
            r: HashMap::new(),
            p: BTreeMap::new(),
            w: BTreeSet::new(),
            confirmed: HashMap::new(),
            confirm_sent: HashMap::new(),
            frontier: 0,
            len: None,
        }
    }

    /// `|U| + |R| + |P| + |W|`, counting each (variable, requester) pair in `P`.
    pub fn memory(&self) -> usize {
        self.u.len() + self.r.len() + self.p.values().map(BTreeSet::len).sum::<usize>() + self.w.len()
    }

    pub fn is_quiescent(&self) -> bool {
        self.u.is_empty() && self.p.is_empty() && self.w.is_empty()
    }

    /// One tick. `last` is `Some(M)` on the final tick of a trace of
    /// length `M`, which also runs finalization; after that, steps only
    /// exchange messages and evaluate.
    pub fn step(
        &mut self,
        plan: &Plan,
        now: Tick,
        inputs: &[(StreamId, Value)],
        inbox: Vec<Message>,
        last: Option<u64>,
    ) -> Result<StepOutput, MonitorError> {
        let prog = &plan.program;
        let mut out = StepOutput::default();
        let mut fresh: Vec<InstantVar> = Vec::new();

        for m in inbox {
            match m.payload {
                Payload::Resp(value) => {
                    self.w.remove(&m.var);
                    self.r.entry(m.var).or_insert(REntry { value, at: now, local: false });
                }
                Payload::Req => {
                    if self.len.is_some_and(|len| m.var.index >= len) {
                        continue;
                    }
                    let known = self.r.contains_key(&m.var) || self.u.contains_key(&(m.var.index, m.var.stream));
                    if !known && m.var.index < self.frontier {
                        return Err(MonitorError::PrunedRequest {
                            stream: prog.name(m.var.stream).to_string(),
                            index: m.var.index,
                            tick: now,
                        });
                    }
                    self.p.entry(m.var).or_default().insert(m.src);
                }
                Payload::Confirm => {
                    let slot = self.confirmed.entry((m.var.stream, m.src)).or_insert(0);
                    *slot = (*slot).max(m.var.index + 1);
                }
            }
        }

        if self.len.is_none() {
            for &(s, value) in inputs {
                let var = InstantVar::new(s, now);
                self.r.insert(var, REntry { value, at: now, local: true });
                fresh.push(var);
                out.resolved.push(Resolution { var, value, instantiated_at: now, resolved_at: now });
            }
            for &s in &plan.local_defined[self.node.ix()] {
                let term = instantiate(prog, s, now, last);
                self.u.insert((now, s), UEntry { term, instantiated_at: now });
            }
            self.frontier = now + 1;
        }

        if let Some(len) = last {
            self.len = Some(len);
            for e in self.u.values_mut() {
                e.term = finalize(&e.term, len);
            }
            self.w.retain(|v| v.index < len);
            self.p.retain(|v, _| v.index < len);
        }

        self.evaluate(plan, now, &mut fresh, &mut out)?;

        // Eager pushes.
        for var in &fresh {
            if prog.stream(var.stream).comm == Comm::Eager {
                let value = self.r[var].value;
                for &dst in &plan.consumers[var.stream.ix()] {
                    out.outgoing.push(Outgoing { payload: Payload::Resp(value), var: *var, src: self.node, dst });
                }
            }
        }

        // Answer pending requests that can be answered.
        let ready: Vec<InstantVar> = self.p.keys().filter(|v| self.r.contains_key(v)).copied().collect();
        for var in ready {
            let value = self.r[&var].value;
            for dst in self.p.remove(&var).unwrap_or_default() {
                out.outgoing.push(Outgoing { payload: Payload::Resp(value), var, src: self.node, dst });
            }
        }

        // Requests for lazy remote leaves, and the lowest index of each
        // remote stream still referenced.
        let mut lowest: HashMap<StreamId, u64> = HashMap::new();
        let mut wanted: BTreeSet<InstantVar> = BTreeSet::new();
        for e in self.u.values() {
            e.term.for_each_leaf(&mut |l| {
                let s = l.var.stream;
                if prog.node_of(s) != self.node {
                    let lo = lowest.entry(s).or_insert(l.var.index);
                    *lo = (*lo).min(l.var.index);
                    if prog.stream(s).comm == Comm::Lazy && !self.r.contains_key(&l.var) && !self.w.contains(&l.var) {
                        wanted.insert(l.var);
                    }
                }
            });
        }
        for var in wanted {
            self.w.insert(var);
            let dst = prog.node_of(var.stream);
            out.outgoing.push(Outgoing { payload: Payload::Req, var, src: self.node, dst });
        }

        if plan.pruning == Pruning::Confirm {
            for &(s, wmin) in &plan.lazy_reads[self.node.ix()] {
                // Future instantiations read s from index now + 1 + wmin on.
                let future = match self.len {
                    Some(len) => len as i64,
                    None => now as i64 + 1 + wmin,
                };
                let bound = lowest.get(&s).map_or(future, |lo| future.min(*lo as i64));
                if bound <= 0 {
                    continue;
                }
                let up_to = (bound - 1) as u64;
                if self.confirm_sent.get(&s).is_some_and(|prev| *prev >= up_to) {
                    continue;
                }
                self.confirm_sent.insert(s, up_to);
                out.outgoing.push(Outgoing {
                    payload: Payload::Confirm,
                    var: InstantVar::new(s, up_to),
                    src: self.node,
                    dst: prog.node_of(s),
                });
            }
        }

        self.prune(plan, now);
        Ok(out)
    }

    fn evaluate(
        &mut self,
        plan: &Plan,
        now: Tick,
        fresh: &mut Vec<InstantVar>,
        out: &mut StepOutput,
    ) -> Result<(), MonitorError> {
        let prog = &plan.program;
        loop {
            let mut progressed = false;
            let keys: Vec<(u64, StreamId)> = self.u.keys().copied().collect();
            for key in keys {
                let entry = &self.u[&key];
                let r = &self.r;
                let reduced =
                    reduce(&entry.term, &|v| r.get(&v).map(|e| e.value), plan.simplifier).map_err(|source| {
                        MonitorError::Eval { stream: prog.name(key.1).to_string(), index: key.0, source }
                    })?;
                if let ITerm::Const(v) = reduced {
                    let entry = self.u.remove(&key).expect("present");
                    let value = v.coerce(prog.stream(key.1).dtype).map_err(|source| MonitorError::Eval {
                        stream: prog.name(key.1).to_string(),
                        index: key.0,
                        source,
                    })?;
                    let var = InstantVar::new(key.1, key.0);
                    self.r.insert(var, REntry { value, at: now, local: true });
                    fresh.push(var);
                    out.resolved.push(Resolution {
                        var,
                        value,
                        instantiated_at: entry.instantiated_at,
                        resolved_at: now,
                    });
                    progressed = true;
                } else {
                    self.u.get_mut(&key).expect("present").term = reduced;
                }
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn prune(&mut self, plan: &Plan, now: Tick) {
        if plan.pruning == Pruning::Keep {
            return;
        }
        let node = self.node;
        let confirmed = &self.confirmed;
        let pending = &self.p;
        self.r.retain(|var, e| {
            let s = var.stream;
            let keep = plan.keep[s.ix()][node.ix()];
            if now < e.at.max(var.index + keep) {
                return true;
            }
            if !e.local || plan.program.stream(s).comm == Comm::Eager || plan.consumers[s.ix()].is_empty() {
                return false;
            }
            if pending.contains_key(var) {
                return true;
            }
            match plan.pruning {
                Pruning::Confirm => {
                    !plan.consumers[s.ix()].iter().all(|c| confirmed.get(&(s, *c)).is_some_and(|n| *n > var.index))
                }
                Pruning::Ttl { .. } => now < var.index + plan.ttl[s.ix()],
                Pruning::Keep => true,
            }
        });
    }
}

/// Message counts of one step's output.
pub fn count_kinds(out: &[Outgoing]) -> [u64; 3] {
    let mut c = [0u64; 3];
    for o in out {
        let k = match o.payload {
            Payload::Resp(_) => MsgKind::Resp,
            Payload::Req => MsgKind::Req,
            Payload::Confirm => MsgKind::Confirm,
        };
        c[k as usize] += 1;
    }
    c
}
