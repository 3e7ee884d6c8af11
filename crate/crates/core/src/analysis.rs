//! Resolution-time bounds.
//!
//! `MTR(s[k])` is the tick by which the monitor that owns `s` is
//! guaranteed to have resolved `s[k]`. It is computed in a topological
//! order of the evaluation graph from the instantiation tick and the
//! dependencies of `s[k]`:
//!
//! * a co-located dependency contributes its own MTR;
//! * a remote eager dependency contributes the arrival of the push sent
//!   when it resolved;
//! * a remote lazy dependency contributes the arrival of the response,
//!   sent once both the request has arrived and the value is resolved;
//! * a reference past the end of the trace resolves to its default on the
//!   last tick; one before the start needs nothing.
//!
//! Arrivals use the FIFO-aware bound `arr(x) = max over t <= x of
//! (t + d(t))`, so every bound here is an upper bound on what the
//! simulator does. Three instantiations share the recursion: the exact
//! delays of a recorded trace, a per-target worst delay taken over the
//! window of send instants that influence the target, and one global
//! delay bound for the whole run.

use thiserror::Error;

use crate::graphs::{bref, classify, DependencyGraph, EvaluationGraph};
use crate::netsim::{Arrivals, DelayTrace};
use crate::program::{NodeIdx, Program, StreamId};
use crate::specdsl::{Comm, StreamKind};
use crate::Tick;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("specification is not well-formed")]
    NotWellFormed,
    #[error("resolution time of `{stream}` grows without bound")]
    Unbounded { stream: String },
    #[error("specification is not decentralized efficiently monitorable")]
    NotDecentralized,
    #[error("lazy stream `{stream}` has remote readers; its storage depends on confirmations")]
    LazyStorage { stream: String },
    #[error("trace length must be positive")]
    EmptyTrace,
}

/// Per stream and index: `table[s][k]`.
pub type MtrTable = Vec<Vec<Tick>>;

/// A dependency of `s[k]` as seen by the recursion.
enum Dep {
    Local(StreamId, u64),
    Eager { v: StreamId, j: u64, from: NodeIdx },
    Lazy { v: StreamId, j: u64, at: NodeIdx },
    End,
}

fn deps_of(p: &Program, s: StreamId, k: u64, len: u64) -> impl Iterator<Item = Dep> + '_ {
    let home = p.node_of(s);
    p.deps(s).iter().filter_map(move |e| {
        let j = k as i64 + e.weight;
        if j < 0 {
            return None;
        }
        let j = j as u64;
        if j >= len {
            return Some(Dep::End);
        }
        let there = p.node_of(e.to);
        Some(if there == home {
            Dep::Local(e.to, j)
        } else if p.stream(e.to).comm == Comm::Eager {
            Dep::Eager { v: e.to, j, from: there }
        } else {
            Dep::Lazy { v: e.to, j, at: there }
        })
    })
}

fn order(p: &Program, len: u64) -> Result<Vec<(StreamId, u64)>, AnalysisError> {
    if len == 0 {
        return Err(AnalysisError::EmptyTrace);
    }
    EvaluationGraph::new(p, len).topological_order().ok_or(AnalysisError::NotWellFormed)
}

fn empty_table(p: &Program, len: u64) -> MtrTable {
    vec![vec![0; len as usize]; p.len()]
}

/// MTR under the delays of `trace`.
pub fn mtr_exact(p: &Program, len: u64, trace: &DelayTrace) -> Result<MtrTable, AnalysisError> {
    let mut arr = Arrivals::new(trace);
    mtr_exact_with(p, len, &mut arr)
}

fn mtr_exact_with(p: &Program, len: u64, arr: &mut Arrivals) -> Result<MtrTable, AnalysisError> {
    let mut t = empty_table(p, len);
    for (s, k) in order(p, len)? {
        let home = p.node_of(s);
        let mut m = k;
        if p.stream(s).kind != StreamKind::Input {
            for d in deps_of(p, s, k, len) {
                let c = match d {
                    Dep::Local(v, j) => t[v.ix()][j as usize],
                    Dep::Eager { v, j, from } => arr.arr(from, home, t[v.ix()][j as usize]),
                    Dep::Lazy { v, j, at } => {
                        let sent = arr.arr(home, at, k).max(t[v.ix()][j as usize]);
                        arr.arr(at, home, sent)
                    }
                    Dep::End => len - 1,
                };
                m = m.max(c);
            }
        }
        t[s.ix()][k as usize] = m;
    }
    Ok(t)
}

/// MTR with one worst delay per target, taken over the window spanned by
/// the target's instantiation and every send instant that feeds it.
pub fn mtr_temporary(p: &Program, len: u64, trace: &DelayTrace, exact: &MtrTable) -> Result<MtrTable, AnalysisError> {
    let mut arr = Arrivals::new(trace);
    mtr_temporary_with(p, len, &mut arr, exact)
}

fn mtr_temporary_with(p: &Program, len: u64, arr: &mut Arrivals, exact: &MtrTable) -> Result<MtrTable, AnalysisError> {
    let mut t = empty_table(p, len);
    for (s, k) in order(p, len)? {
        let home = p.node_of(s);
        if p.stream(s).kind == StreamKind::Input {
            t[s.ix()][k as usize] = k;
            continue;
        }
        let (mut lo, mut hi) = (k, k);
        let mut pairs: Vec<(NodeIdx, NodeIdx)> = Vec::new();
        for d in deps_of(p, s, k, len) {
            match d {
                Dep::Eager { v, j, from } => {
                    let x = exact[v.ix()][j as usize];
                    lo = lo.min(x);
                    hi = hi.max(x);
                    pairs.push((from, home));
                }
                Dep::Lazy { v, j, at } => {
                    let x = arr.arr(home, at, k).max(exact[v.ix()][j as usize]);
                    lo = lo.min(x);
                    hi = hi.max(x);
                    pairs.push((home, at));
                    pairs.push((at, home));
                }
                Dep::Local(..) | Dep::End => {}
            }
        }
        pairs.sort();
        pairs.dedup();
        let worst = pairs.iter().map(|&(a, b)| arr.worst_delta(a, b, lo, hi)).max().unwrap_or(0);
        t[s.ix()][k as usize] = bounded_step(p, s, k, len, &t, worst);
    }
    Ok(t)
}

/// MTR when every remote message takes at most `d` ticks.
pub fn mtr_aeternal(p: &Program, len: u64, d: u64) -> Result<MtrTable, AnalysisError> {
    let mut t = empty_table(p, len);
    for (s, k) in order(p, len)? {
        t[s.ix()][k as usize] =
            if p.stream(s).kind == StreamKind::Input { k } else { bounded_step(p, s, k, len, &t, d) };
    }
    Ok(t)
}

fn bounded_step(p: &Program, s: StreamId, k: u64, len: u64, t: &MtrTable, d: u64) -> Tick {
    deps_of(p, s, k, len)
        .map(|dep| match dep {
            Dep::Local(v, j) => t[v.ix()][j as usize],
            Dep::Eager { v, j, .. } => t[v.ix()][j as usize] + d,
            Dep::Lazy { v, j, .. } => (k + d).max(t[v.ix()][j as usize]) + d,
            Dep::End => len - 1,
        })
        .fold(k, u64::max)
}

/// The three bounds of one run, side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub len: u64,
    pub exact: MtrTable,
    pub temporary: MtrTable,
    pub aeternal: MtrTable,
    /// Global delay used for the aeternal bound: the largest delay in the
    /// trace, including any tick the other two bounds consulted.
    pub aeternal_delay: u64,
}

pub fn bounds(p: &Program, len: u64, trace: &DelayTrace) -> Result<Bounds, AnalysisError> {
    let mut arr = Arrivals::new(trace);
    let exact = mtr_exact_with(p, len, &mut arr)?;
    let temporary = mtr_temporary_with(p, len, &mut arr, &exact)?;
    let d = arr.max_seen();
    let aeternal = mtr_aeternal(p, len, d)?;
    Ok(Bounds { len, exact, temporary, aeternal, aeternal_delay: d })
}

/// Constant time-to-resolve per stream when every message between nodes
/// `a` and `b` takes exactly `dist(a, b)` ticks.
///
/// Longest-path fixpoint of `TTR(s) = max(0, max over s -> v with offset w
/// of TTR(v) + w + leg)`, where `leg` is 0 for co-located reads, one
/// delay for eager reads and a round trip for lazy reads.
pub fn ttr_sync(p: &Program, dist: impl Fn(NodeIdx, NodeIdx) -> u64) -> Result<Vec<u64>, AnalysisError> {
    let mut ttr = vec![0i64; p.len()];
    let rounds = p.len() + 1;
    for round in 0..=rounds {
        let mut changed = None;
        for s in p.ids() {
            if p.stream(s).kind == StreamKind::Input {
                continue;
            }
            let home = p.node_of(s);
            let mut best = 0i64;
            for e in p.deps(s) {
                let there = p.node_of(e.to);
                let via = ttr[e.to.ix()] + e.weight;
                let c = if there == home {
                    via
                } else if p.stream(e.to).comm == Comm::Eager {
                    via + dist(there, home) as i64
                } else {
                    let back = dist(there, home) as i64;
                    (via + back).max((dist(home, there) as i64) + back)
                };
                best = best.max(c);
            }
            if best > ttr[s.ix()] {
                ttr[s.ix()] = best;
                changed = Some(s);
            }
        }
        match changed {
            None => break,
            Some(s) if round == rounds => return Err(AnalysisError::Unbounded { stream: p.name(s).to_string() }),
            Some(_) => {}
        }
    }
    if !classify(&DependencyGraph::from_program(p)).decentralized_efficiently_monitorable {
        return Err(AnalysisError::NotDecentralized);
    }
    Ok(ttr.into_iter().map(|x| x as u64).collect())
}

/// Tick after which no node holds `s[k]` any more.
///
/// Eager streams: the last arrival of the pushed value or the last local
/// read, whichever is later. Lazy streams: `k + bref(s)` with `d` as the
/// delay of every remote link, or the resolution itself if that is later.
pub fn prune_horizon(p: &Program, s: StreamId, k: u64, mtr: Tick, d: u64, trace: &DelayTrace) -> Tick {
    let home = p.node_of(s);
    let mut h = mtr.max(k + p.local_keep(s, home));
    match p.stream(s).comm {
        Comm::Eager => {
            let mut arr = Arrivals::new(trace);
            for n in p.consumer_nodes(s) {
                h = h.max(arr.arr(home, n, mtr)).max(k + p.local_keep(s, n));
            }
        }
        Comm::Lazy => {
            h = h.max(k + bref(p, s, |a, b| if a == b { 0 } else { d }));
        }
    }
    h
}

/// Upper bound on `|U| + |R| + |P| + |W|` per node and tick, from the
/// lifetime of every entry: a local `s[k]` from instantiation until the
/// later of its resolution and its last local read; a pushed remote value
/// from its index until the later of its latest arrival and its last read.
///
/// Only meaningful when no lazy stream is read remotely, since lazy
/// storage is released by confirmations rather than by a fixed horizon.
pub fn memory_bound(
    p: &Program,
    len: u64,
    exact: &MtrTable,
    trace: &DelayTrace,
) -> Result<Vec<Vec<u64>>, AnalysisError> {
    for s in p.ids() {
        if p.stream(s).comm == Comm::Lazy && !p.consumer_nodes(s).is_empty() {
            return Err(AnalysisError::LazyStorage { stream: p.name(s).to_string() });
        }
    }
    let mut arr = Arrivals::new(trace);
    let mut spans: Vec<(NodeIdx, Tick, Tick)> = Vec::new();
    for s in p.ids() {
        let home = p.node_of(s);
        let keep_home = p.local_keep(s, home);
        let consumers = p.consumer_nodes(s);
        for k in 0..len {
            let m = exact[s.ix()][k as usize];
            spans.push((home, k, m.max(k + keep_home)));
            for &n in &consumers {
                let a = arr.arr(home, n, m);
                spans.push((n, k, a.max(k + p.local_keep(s, n))));
            }
        }
    }
    let horizon = spans.iter().map(|s| s.2).max().unwrap_or(0) as usize;
    let mut diff = vec![vec![0i64; horizon + 1]; p.nodes.len()];
    for (n, from, until) in spans {
        if until > from {
            diff[n.ix()][from as usize] += 1;
            diff[n.ix()][until as usize] -= 1;
        }
    }
    Ok(diff
        .into_iter()
        .map(|row| {
            let mut acc = 0i64;
            row.into_iter()
                .map(|x| {
                    acc += x;
                    acc as u64
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{DelayKind, DelayModel};
    use crate::specdsl::parse;

    fn prog(src: &str) -> Program {
        Program::new(&parse(src).unwrap())
    }

    fn trace(p: &Program, model: &DelayModel, upto: u64) -> DelayTrace {
        let mut t = DelayTrace::for_program(model, p);
        t.extend_to(upto);
        t
    }

    const AB: &str = "@1{output num a eval = b[-1|0]} \n @2{output num b eval = a[-1|0]}";

    #[test]
    fn split_cycle_grows_by_the_round_trip() {
        let p = prog(AB);
        let t = trace(&p, &DelayModel::constant(2), 300);
        let m = mtr_exact(&p, 100, &t).unwrap();
        for n in 0..100u64 {
            assert_eq!(m[0][n as usize], 2 * n);
            assert_eq!(m[1][n as usize], 2 * n);
        }
        assert!(matches!(ttr_sync(&p, |_, _| 2), Err(AnalysisError::Unbounded { .. })));
    }

    #[test]
    fn co_located_past_only_resolves_at_instantiation() {
        let p = prog("@1{ input int x\n output int y = x + y[-1|0] }");
        let t = trace(&p, &DelayModel::constant(5), 10);
        let b = bounds(&p, 10, &t).unwrap();
        for tab in [&b.exact, &b.temporary, &b.aeternal] {
            assert!(tab.iter().all(|row| row.iter().enumerate().all(|(k, m)| *m == k as u64)));
        }
        assert_eq!(ttr_sync(&p, |_, _| 5).unwrap(), vec![0, 0]);
    }

    #[test]
    fn acc_root_worked_example() {
        // root[1] = max(1, arr(max(1, arr(0)))) with acc remote to root
        let p = prog("@1{ input num y\n define int acc = y + root[-1|0] }\n@2{ input bool reset\n output int root = if reset then 0 else acc }");
        let t = trace(&p, &DelayModel::constant(3), 50);
        let m = mtr_exact(&p, 5, &t).unwrap();
        let (acc, root) = (p.id("acc").unwrap().ix(), p.id("root").unwrap().ix());
        assert_eq!(m[root][0], 3);
        assert_eq!(m[acc][1], 6);
        assert_eq!(m[root][1], 9);
    }

    #[test]
    fn lazy_single_hop() {
        let p = prog("@1{ input int x lazy }\n@2{ output int y = x }");
        let t = trace(&p, &DelayModel::constant(2), 50);
        let b = bounds(&p, 10, &t).unwrap();
        let y = p.id("y").unwrap().ix();
        assert!(b.exact[y].iter().enumerate().all(|(k, m)| *m == k as u64 + 4));
        assert_eq!(b.exact, b.temporary);
        assert_eq!(b.exact, b.aeternal);
        assert_eq!(ttr_sync(&p, |_, _| 2).unwrap()[y], 4);
    }

    #[test]
    fn lazy_waits_for_late_value() {
        // x[k+3] is only known at k+3, after the request arrived at k+1.
        let p = prog("@1{ input int x lazy }\n@2{ output int y = x[3|0] }");
        let t = trace(&p, &DelayModel::constant(1), 50);
        let m = mtr_exact(&p, 10, &t).unwrap();
        let y = p.id("y").unwrap().ix();
        assert_eq!(m[y][0], 4);
        assert_eq!(m[y][7], 9);
    }

    #[test]
    fn temporary_drops_after_peak() {
        let p = prog("@1{ input int x }\n@2{ output int y = x + 1 }");
        let peak = DelayKind::ConstantPeak { base: 1, peak_start: 10, peak_height: 8, recovery_slope: 2 };
        let t = trace(&p, &DelayModel::uniform(peak), 200);
        let b = bounds(&p, 60, &t).unwrap();
        let y = p.id("y").unwrap().ix();
        let ae: Vec<u64> = (0..60).map(|k| b.aeternal[y][k] - k as u64).collect();
        assert!(ae.iter().all(|x| *x == ae[0]));
        assert_eq!(b.temporary[y][0], 1);
        assert!(b.temporary[y][10] > 10 + 1);
        assert_eq!(b.temporary[y][59], 60);
        for k in 0..60 {
            assert!(b.exact[y][k] <= b.temporary[y][k] && b.temporary[y][k] <= b.aeternal[y][k]);
        }
    }

    #[test]
    fn sync_ttr_for_a_tree() {
        let p = prog(
            "@1{ input int x\n define int a = x[-1|0] + x }\n@2{ input int y\n define int b = MAX(y, a) }\n@3{ output int root = b + a[-1|0] }",
        );
        let ttr = ttr_sync(&p, |_, _| 3).unwrap();
        assert_eq!(ttr[p.id("root").unwrap().ix()], 6);
        assert_eq!(ttr[p.id("b").unwrap().ix()], 3);
    }

    #[test]
    fn prune_horizons() {
        let p = prog("@1{ input int x\n output int y = x[2|0] + x[-3|0] }");
        let t = trace(&p, &DelayModel::constant(1), 10);
        let x = p.id("x").unwrap();
        assert_eq!(prune_horizon(&p, x, 4, 4, 1, &t), 7);
        let p = prog("@1{ input int x lazy }\n@2{ output int y = x[-2|0] }");
        let x = p.id("x").unwrap();
        assert_eq!(prune_horizon(&p, x, 4, 4, 3, &t), 9);
    }

    #[test]
    fn memory_bound_rejects_remote_lazy() {
        let p = prog("@1{ input int x lazy }\n@2{ output int y = x }");
        let t = trace(&p, &DelayModel::constant(1), 10);
        let m = mtr_exact(&p, 5, &t).unwrap();
        assert!(matches!(memory_bound(&p, 5, &m, &t), Err(AnalysisError::LazyStorage { .. })));
    }
}
