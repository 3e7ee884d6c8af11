//! Discrete-time network with per-pair delays.
//!
//! Sends happen at the end of a tick and deliveries at the start of one.
//! The delay `d(t, a, b)` of a message sent at `t` from `a` to `b` is a
//! pure function of the model, the pair and `t`, so a run can be replayed
//! and analysed after the fact. Arrivals per pair never overtake each
//! other: `arrivesAt = max(t + d, last arrival on the pair)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{NodeIdx, Program};
use crate::specdsl::NodeId;
use crate::terms::InstantVar;
use crate::value::Value;
use crate::Tick;

/// One family of delay functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum DelayKind {
    Constant {
        #[serde(alias = "d")]
        delay: u64,
    },
    /// `base`, jumping by `peak_height` at `peak_start` and recovering by
    /// `recovery_slope` per tick.
    ConstantPeak {
        base: u64,
        peak_start: u64,
        peak_height: u64,
        recovery_slope: u64,
    },
    Normal {
        mean: f64,
        stddev: f64,
        seed: u64,
    },
    NormalPeak {
        mean: f64,
        stddev: f64,
        seed: u64,
        peak_start: u64,
        peak_height: u64,
        recovery_slope: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("bad delay model `{text}`: {reason}")]
pub struct DelayParseError {
    pub text: String,
    pub reason: String,
}

fn peak_extra(t: Tick, start: u64, height: u64, slope: u64) -> u64 {
    if t < start {
        0
    } else {
        height.saturating_sub(slope.saturating_mul(t - start))
    }
}

fn mix(h: u64, bytes: &[u8]) -> u64 {
    // FNV-1a
    bytes.iter().fold(h, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

fn normal_sample(mean: f64, stddev: f64, seed: u64, src: &NodeId, dst: &NodeId, t: Tick) -> u64 {
    let mut h = mix(0xcbf2_9ce4_8422_2325, &seed.to_le_bytes());
    h = mix(h, src.as_str().as_bytes());
    h = mix(h, &[0xff]);
    h = mix(h, dst.as_str().as_bytes());
    h = mix(h, &t.to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let x = match Normal::new(mean, stddev.max(0.0)) {
        Ok(n) => n.sample(&mut rng),
        Err(_) => mean,
    };
    let r = x.round();
    if r.is_finite() && r >= 1.0 {
        r.min(u32::MAX as f64) as u64
    } else {
        1
    }
}

impl DelayKind {
    /// `d(t, src, dst)`, always at least one tick.
    pub fn delay(&self, src: &NodeId, dst: &NodeId, t: Tick) -> u64 {
        let d = match *self {
            DelayKind::Constant { delay } => delay,
            DelayKind::ConstantPeak { base, peak_start, peak_height, recovery_slope } => {
                base + peak_extra(t, peak_start, peak_height, recovery_slope)
            }
            DelayKind::Normal { mean, stddev, seed } => normal_sample(mean, stddev, seed, src, dst, t),
            DelayKind::NormalPeak { mean, stddev, seed, peak_start, peak_height, recovery_slope } => {
                normal_sample(mean, stddev, seed, src, dst, t) + peak_extra(t, peak_start, peak_height, recovery_slope)
            }
        };
        d.max(1)
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            DelayKind::Constant { .. } => true,
            DelayKind::ConstantPeak { peak_height, .. } => peak_height == 0,
            _ => false,
        }
    }
}

impl FromStr for DelayKind {
    type Err = DelayParseError;

    /// `constant:3`, `constantPeak:2,50,20,2`, `normal:4,2,7`,
    /// `normalPeak:4,2,7,500,100,1`, or an inline JSON object.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| DelayParseError { text: s.to_string(), reason: reason.to_string() };
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| err(&e.to_string()));
        }
        let (kind, params) = s.split_once(':').ok_or_else(|| err("expected `kind:params`"))?;
        let nums: Vec<&str> = params.split(',').map(str::trim).collect();
        let int = |i: usize| -> Result<u64, DelayParseError> {
            nums.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| err("expected non-negative integers"))
        };
        let float = |i: usize| -> Result<f64, DelayParseError> {
            nums.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| err("expected numbers"))
        };
        let want = |n: usize| if nums.len() == n { Ok(()) } else { Err(err(&format!("expected {n} parameters"))) };
        match kind {
            "constant" => {
                want(1)?;
                Ok(DelayKind::Constant { delay: int(0)? })
            }
            "constantPeak" => {
                want(4)?;
                Ok(DelayKind::ConstantPeak {
                    base: int(0)?,
                    peak_start: int(1)?,
                    peak_height: int(2)?,
                    recovery_slope: int(3)?,
                })
            }
            "normal" => {
                want(3)?;
                Ok(DelayKind::Normal { mean: float(0)?, stddev: float(1)?, seed: int(2)? })
            }
            "normalPeak" => {
                want(6)?;
                Ok(DelayKind::NormalPeak {
                    mean: float(0)?,
                    stddev: float(1)?,
                    seed: int(2)?,
                    peak_start: int(3)?,
                    peak_height: int(4)?,
                    recovery_slope: int(5)?,
                })
            }
            _ => Err(err("unknown kind")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOverride {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(flatten)]
    pub delay: DelayKind,
}

/// A default delay family plus per-pair overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DelayModel {
    #[serde(flatten)]
    pub default: DelayKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_pair: Vec<PairOverride>,
}

impl DelayModel {
    pub fn uniform(kind: DelayKind) -> Self {
        DelayModel { default: kind, per_pair: Vec::new() }
    }

    pub fn constant(d: u64) -> Self {
        Self::uniform(DelayKind::Constant { delay: d })
    }

    pub fn with_override(mut self, src: impl Into<NodeId>, dst: impl Into<NodeId>, kind: DelayKind) -> Self {
        self.per_pair.push(PairOverride { src: src.into(), dst: dst.into(), delay: kind });
        self
    }

    pub fn kind_for(&self, src: &NodeId, dst: &NodeId) -> &DelayKind {
        self.per_pair.iter().rev().find(|o| &o.src == src && &o.dst == dst).map(|o| &o.delay).unwrap_or(&self.default)
    }

    pub fn is_constant(&self) -> bool {
        let mut all = std::iter::once(&self.default).chain(self.per_pair.iter().map(|o| &o.delay));
        let first = match &self.default {
            DelayKind::Constant { delay } => *delay,
            DelayKind::ConstantPeak { base, peak_height: 0, .. } => *base,
            _ => return false,
        };
        all.all(|k| match k {
            DelayKind::Constant { delay } => *delay == first,
            DelayKind::ConstantPeak { base, peak_height: 0, .. } => *base == first,
            _ => false,
        })
    }
}

impl FromStr for DelayModel {
    type Err = DelayParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.starts_with('{') {
            return serde_json::from_str(t).map_err(|e| DelayParseError { text: s.into(), reason: e.to_string() });
        }
        t.parse().map(DelayModel::uniform)
    }
}

impl fmt::Display for DelayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

/// The delay function of one run: a model bound to a concrete node list,
/// tabulated for every pair and tick the run went through.
#[derive(Debug, Clone)]
pub struct DelayTrace {
    nodes: Vec<NodeId>,
    kinds: Vec<DelayKind>,
    table: Vec<Vec<u32>>,
}

impl DelayTrace {
    pub fn new(model: &DelayModel, nodes: &[NodeId]) -> Self {
        let n = nodes.len();
        let mut kinds = Vec::with_capacity(n * n);
        for a in nodes {
            for b in nodes {
                kinds.push(model.kind_for(a, b).clone());
            }
        }
        DelayTrace { nodes: nodes.to_vec(), kinds, table: vec![Vec::new(); n * n] }
    }

    pub fn for_program(model: &DelayModel, p: &Program) -> Self {
        Self::new(model, &p.nodes)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    fn pair(&self, a: NodeIdx, b: NodeIdx) -> usize {
        a.ix() * self.nodes.len() + b.ix()
    }

    /// Number of ticks tabulated.
    pub fn len(&self) -> u64 {
        self.table.first().map_or(0, |v| v.len() as u64)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tabulates every pair up to and including tick `t`.
    pub fn extend_to(&mut self, t: Tick) {
        let n = self.nodes.len();
        for a in 0..n {
            for b in 0..n {
                let p = a * n + b;
                while (self.table[p].len() as u64) <= t {
                    let tick = self.table[p].len() as u64;
                    let d = if a == b { 1 } else { self.kinds[p].delay(&self.nodes[a], &self.nodes[b], tick) };
                    self.table[p].push(d.min(u32::MAX as u64) as u32);
                }
            }
        }
    }

    /// `d(t, a, b)`. Self-pairs take one tick.
    pub fn delay(&self, a: NodeIdx, b: NodeIdx, t: Tick) -> u64 {
        let p = self.pair(a, b);
        match self.table[p].get(t as usize) {
            Some(d) => u64::from(*d),
            None if a == b => 1,
            None => self.kinds[p].delay(&self.nodes[a.ix()], &self.nodes[b.ix()], t),
        }
    }

    /// Largest tabulated delay over distinct pairs.
    pub fn max_delay(&self) -> u64 {
        let n = self.nodes.len();
        let mut best = 1;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    best = best.max(self.table[a * n + b].iter().copied().max().unwrap_or(1) as u64);
                }
            }
        }
        best
    }

    /// Rows `(tick, src, dst, delay)` over distinct pairs, tick-major.
    pub fn rows(&self) -> Vec<(Tick, NodeIdx, NodeIdx, u64)> {
        let n = self.nodes.len() as u32;
        let mut out = Vec::new();
        for t in 0..self.len() {
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        out.push((t, NodeIdx(a), NodeIdx(b), self.delay(NodeIdx(a), NodeIdx(b), t)));
                    }
                }
            }
        }
        out
    }
}

/// Arrival bound `arr_{a,b}(x) = max over t <= x of (t + d(t, a, b))`:
/// the latest a message sent at `x` can arrive, FIFO clamping included.
#[derive(Debug, Clone)]
pub struct Arrivals<'a> {
    trace: &'a DelayTrace,
    prefix: HashMap<(NodeIdx, NodeIdx), Vec<Tick>>,
    max_seen: u64,
}

impl<'a> Arrivals<'a> {
    pub fn new(trace: &'a DelayTrace) -> Self {
        Arrivals { trace, prefix: HashMap::new(), max_seen: 1 }
    }

    pub fn arr(&mut self, a: NodeIdx, b: NodeIdx, x: Tick) -> Tick {
        if a == b {
            return x;
        }
        let trace = self.trace;
        let mut seen = self.max_seen;
        let v = self.prefix.entry((a, b)).or_default();
        while (v.len() as u64) <= x {
            let t = v.len() as u64;
            let d = trace.delay(a, b, t);
            seen = seen.max(d);
            let here = t + d;
            let prev = v.last().copied().unwrap_or(0);
            v.push(prev.max(here));
        }
        let out = v[x as usize];
        self.max_seen = seen;
        out
    }

    /// Largest delay consulted so far, including ticks past the tabulated
    /// range.
    pub fn max_seen(&self) -> u64 {
        self.max_seen.max(self.trace.max_delay())
    }

    /// Largest `arr(x) - x` for `x` in `[lo, hi]`.
    pub fn worst_delta(&mut self, a: NodeIdx, b: NodeIdx, lo: Tick, hi: Tick) -> u64 {
        if a == b {
            return 0;
        }
        (lo..=hi).map(|x| self.arr(a, b, x) - x).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsgKind {
    Resp,
    Req,
    Confirm,
}

impl MsgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::Resp => "resp",
            MsgKind::Req => "req",
            MsgKind::Confirm => "confirm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    /// The value of `var`.
    Resp(Value),
    /// A request for `var`.
    Req,
    /// The sender no longer needs values of `var.stream` up to `var.index`.
    Confirm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub payload: Payload,
    pub var: InstantVar,
    pub src: NodeIdx,
    pub dst: NodeIdx,
    pub sent_at: Tick,
    pub arrives_at: Tick,
    pub seq: u64,
}

impl Message {
    pub fn kind(&self) -> MsgKind {
        match self.payload {
            Payload::Resp(_) => MsgKind::Resp,
            Payload::Req => MsgKind::Req,
            Payload::Confirm => MsgKind::Confirm,
        }
    }
}

/// A message before the network stamps it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outgoing {
    pub payload: Payload,
    pub var: InstantVar,
    pub src: NodeIdx,
    pub dst: NodeIdx,
}

#[derive(Debug, Clone)]
pub struct Network {
    trace: DelayTrace,
    last_arrival: Vec<Tick>,
    in_flight: BTreeMap<Tick, Vec<Message>>,
    in_flight_count: usize,
    seq: u64,
}

impl Network {
    pub fn new(model: &DelayModel, nodes: &[NodeId]) -> Self {
        let n = nodes.len();
        Network {
            trace: DelayTrace::new(model, nodes),
            last_arrival: vec![0; n * n],
            in_flight: BTreeMap::new(),
            in_flight_count: 0,
            seq: 0,
        }
    }

    pub fn send(&mut self, m: Outgoing, now: Tick) -> Message {
        self.trace.extend_to(now);
        let d = self.trace.delay(m.src, m.dst, now);
        let p = self.trace.pair(m.src, m.dst);
        let arrives_at = (now + d).max(self.last_arrival[p]);
        self.last_arrival[p] = arrives_at;
        let msg =
            Message { payload: m.payload, var: m.var, src: m.src, dst: m.dst, sent_at: now, arrives_at, seq: self.seq };
        self.seq += 1;
        self.in_flight.entry(arrives_at).or_default().push(msg.clone());
        self.in_flight_count += 1;
        msg
    }

    /// Messages arriving at `now`, per destination, ordered by
    /// `(src, sentAt, seq)`.
    pub fn deliver(&mut self, now: Tick) -> BTreeMap<NodeIdx, Vec<Message>> {
        self.trace.extend_to(now);
        let mut out: BTreeMap<NodeIdx, Vec<Message>> = BTreeMap::new();
        // Everything due by now; nothing is ever scheduled in the past.
        let due: Vec<Tick> = self.in_flight.range(..=now).map(|(t, _)| *t).collect();
        for t in due {
            for m in self.in_flight.remove(&t).unwrap_or_default() {
                self.in_flight_count -= 1;
                out.entry(m.dst).or_default().push(m);
            }
        }
        for v in out.values_mut() {
            v.sort_by_key(|m| (m.src, m.sent_at, m.seq));
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight_count
    }

    pub fn trace(&self) -> &DelayTrace {
        &self.trace
    }

    pub fn into_trace(self) -> DelayTrace {
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::StreamId;

    fn nodes(n: usize) -> Vec<NodeId> {
        (0..n).map(|i| NodeId(i.to_string())).collect()
    }

    fn out(src: u32, dst: u32) -> Outgoing {
        Outgoing { payload: Payload::Req, var: InstantVar::new(StreamId(0), 0), src: NodeIdx(src), dst: NodeIdx(dst) }
    }

    #[test]
    fn constant_delay_arrival() {
        let mut net = Network::new(&DelayModel::constant(3), &nodes(2));
        assert_eq!(net.send(out(0, 1), 10).arrives_at, 13);
        let mut net = Network::new(&DelayModel::constant(1), &nodes(2));
        assert_eq!(net.send(out(0, 1), 5).arrives_at, 6);
        assert_eq!(net.send(out(0, 1), 5).arrives_at, 6);
    }

    #[test]
    fn normal_arrivals_are_clamped_to_fifo() {
        let model = DelayModel::uniform(DelayKind::Normal { mean: 4.0, stddev: 2.0, seed: 7 });
        let ns = nodes(2);
        let kind = model.kind_for(&ns[0], &ns[1]).clone();
        // Find a tick whose successor would arrive earlier without clamping.
        let t = (0..1000)
            .find(|&t| t + 1 + kind.delay(&ns[0], &ns[1], t + 1) < t + kind.delay(&ns[0], &ns[1], t))
            .expect("some overtaking sample");
        let mut net = Network::new(&model, &ns);
        let a = net.send(out(0, 1), t).arrives_at;
        let b = net.send(out(0, 1), t + 1).arrives_at;
        assert_eq!(a, t + kind.delay(&ns[0], &ns[1], t));
        assert_eq!(b, a);
    }

    #[test]
    fn delivery_groups_and_orders() {
        let mut net = Network::new(&DelayModel::constant(2), &nodes(3));
        assert!(net.deliver(0).is_empty());
        net.send(out(2, 0), 0);
        net.send(out(1, 0), 0);
        net.send(out(1, 2), 0);
        assert!(net.deliver(1).is_empty());
        let d = net.deliver(2);
        let srcs: Vec<u32> = d[&NodeIdx(0)].iter().map(|m| m.src.0).collect();
        assert_eq!(srcs, vec![1, 2]);
        assert_eq!(d[&NodeIdx(2)].len(), 1);
        assert_eq!(net.in_flight(), 0);
    }

    #[test]
    fn constant_delay_delivers_only_at_send_plus_d() {
        for d in 1..5 {
            let mut net = Network::new(&DelayModel::constant(d), &nodes(2));
            for sent in 0..10 {
                net.send(out(0, 1), sent);
                for t in sent + 1..sent + d {
                    assert!(net.deliver(t).is_empty());
                }
                let got = net.deliver(sent + d);
                assert_eq!(got[&NodeIdx(1)].len(), 1);
            }
        }
    }

    #[test]
    fn peak_shape() {
        let k = DelayKind::ConstantPeak { base: 2, peak_start: 50, peak_height: 20, recovery_slope: 2 };
        let (a, b) = (NodeId::from("0"), NodeId::from("1"));
        let seq: Vec<u64> = (48..62).map(|t| k.delay(&a, &b, t)).collect();
        assert_eq!(seq, vec![2, 2, 22, 20, 18, 16, 14, 12, 10, 8, 6, 4, 2, 2]);
    }

    #[test]
    fn trace_records_every_pair_and_tick() {
        let mut net = Network::new(&DelayModel::constant(3), &nodes(2));
        assert!(net.trace().is_empty());
        net.deliver(4);
        let rows = net.trace().rows();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.3 == 3));
    }

    #[test]
    fn delay_strings_and_json() {
        assert_eq!("constant:3".parse::<DelayKind>().unwrap(), DelayKind::Constant { delay: 3 });
        assert_eq!(
            "normalPeak:4,2,7,500,100,1".parse::<DelayKind>().unwrap(),
            DelayKind::NormalPeak {
                mean: 4.0,
                stddev: 2.0,
                seed: 7,
                peak_start: 500,
                peak_height: 100,
                recovery_slope: 1
            }
        );
        let json =
            r#"{"kind":"normalPeak","mean":4,"stddev":2,"seed":7,"peakStart":500,"peakHeight":100,"recoverySlope":1}"#;
        assert_eq!(
            json.parse::<DelayModel>().unwrap().default,
            "normalPeak:4,2,7,500,100,1".parse::<DelayKind>().unwrap()
        );
        let m = DelayModel::constant(2).with_override("0", "3", "constantPeak:2,10,30,1".parse().unwrap());
        let back: DelayModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let t: DelayModel = toml::from_str("kind = \"constant\"\ndelay = 4\n").unwrap();
        assert_eq!(t, DelayModel::constant(4));
        assert!("bogus:1".parse::<DelayKind>().is_err());
        assert!("constant:1,2".parse::<DelayKind>().is_err());
    }

    #[test]
    fn arrival_bound_is_prefix_max() {
        let k = "constantPeak:1,3,5,1".parse::<DelayKind>().unwrap();
        let model = DelayModel::uniform(k);
        let mut tr = DelayTrace::new(&model, &nodes(2));
        tr.extend_to(20);
        let mut arr = Arrivals::new(&tr);
        let (a, b) = (NodeIdx(0), NodeIdx(1));
        // d: 1 1 1 6 5 4 3 2 1 ...; t + d: 1 2 3 9 9 9 9 9 9 10
        let v: Vec<Tick> = (0..10).map(|x| arr.arr(a, b, x)).collect();
        assert_eq!(v, vec![1, 2, 3, 9, 9, 9, 9, 9, 9, 10]);
        assert_eq!(arr.worst_delta(a, b, 0, 9), 6);
        assert_eq!(arr.worst_delta(a, b, 9, 12), 1);
    }
}
