//! Regression battery over the shipped fixtures: synchronous subsumption,
//! the cost of emulating synchrony, soundness of the bounds, bounded
//! memory, independence from the number of monitors, redundancy, and the
//! split cycle that resolves at `2n`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{compare_sync, experiment, fixtures, ingest, HarnessError, InputDist};
use crate::analysis::{self, ttr_sync};
use crate::graphs::classify_spec;
use crate::monitor::{RunConfig, RunResult};
use crate::netsim::{DelayKind, DelayModel, MsgKind};
use crate::oracle::Valuation;
use crate::program::{NodeIdx, StreamId};
use crate::specdsl::{load, Specification};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Trace length of the memory check; the others scale from it.
    pub length: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 1, length: 6000 }
    }
}

type Check = fn(&SuiteConfig) -> Result<(bool, String), HarnessError>;

const CHECKS: [(&str, Check); 7] = [
    ("synchronous subsumption", synchronous_subsumption),
    ("synchronous emulation cost", synchronous_emulation),
    ("observed times within bounds", bounds_hold),
    ("bounded memory", bounded_memory),
    ("memory independent of monitor count", monitor_count),
    ("redundancy", redundancy),
    ("split cycle resolves at 2n", split_cycle),
];

/// Runs every check in parallel; errors count as failures.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<SuiteCheck> {
    CHECKS
        .par_iter()
        .map(|(name, f)| {
            let (passed, detail) = f(cfg).unwrap_or_else(|e| (false, format!("error: {e}")));
            SuiteCheck { name: name.to_string(), passed, detail }
        })
        .collect()
}

fn normal_peak(seed: u64, start: u64, height: u64) -> DelayModel {
    DelayModel::uniform(DelayKind::NormalPeak {
        mean: 3.0,
        stddev: 1.0,
        seed,
        peak_start: start,
        peak_height: height,
        recovery_slope: 1,
    })
}

fn never(spec: &Specification, len: u64, seed: u64, stream: &str) -> Result<Valuation, HarnessError> {
    let d = BTreeMap::from([(stream.to_string(), InputDist::Bernoulli { p: 0.0 })]);
    ingest::synthetic(spec, len, seed, &d)
}

fn synchronous_subsumption(cfg: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, src) in [("acc_root_colocated", fixtures::ACC_ROOT_COLOCATED), ("tree3", fixtures::TREE3)] {
        let spec = load(src)?;
        let inputs = never(&spec, 300, cfg.seed, "reset")?;
        let exp = experiment(&spec, &inputs, &DelayModel::constant(2), &RunConfig::default(), &[])?;
        let p = &exp.result.program;
        let predicted = ttr_sync(p, |_, _| 2)?;
        let root = p.id("root").expect("fixture has root");
        let ttr = exp.result.ttr("root");
        let same = ttr.iter().all(|t| *t == predicted[root.ix()]);
        ok &= same;
        notes.push(format!(
            "{name}: predicted {}, observed {:?}..{:?}",
            predicted[root.ix()],
            ttr.iter().min(),
            ttr.iter().max()
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn synchronous_emulation(cfg: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let spec = load(fixtures::TREE_DEPTH2)?;
    let inputs = ingest::synthetic(&spec, 400, cfg.seed, &BTreeMap::new())?;
    let c = compare_sync(&spec, &inputs, &normal_peak(cfg.seed, 100, 20), &RunConfig::default(), "root")?;
    let dominates = c.async_ttr.iter().zip(&c.sync_ttr).all(|(a, s)| a <= s);
    let strict = c.async_ttr != c.sync_ttr;
    let memory = c.sync_peak_memory >= c.async_peak_memory;
    Ok((
        dominates && strict && memory,
        format!(
            "sync delay {}, TTR ratio {:.2}, peak memory {} vs {}",
            c.sync_delay, c.ttr_ratio, c.sync_peak_memory, c.async_peak_memory
        ),
    ))
}

fn bounds_hold(cfg: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let spec = load(fixtures::TEMPERATURE)?;
    let inputs = ingest::synthetic(&spec, 500, cfg.seed, &BTreeMap::new())?;
    let mut checked = 0u64;
    for model in [normal_peak(cfg.seed, 200, 15), DelayModel::constant(3)] {
        let exp = experiment(&spec, &inputs, &model, &RunConfig::default(), &[])?;
        let r = &exp.result;
        let b = analysis::bounds(&r.program, r.len, &r.trace)?;
        for s in r.program.ids() {
            for k in 0..r.len as usize {
                let got = r.resolved[s.ix()][k].resolved_at;
                let (e, t, a) = (b.exact[s.ix()][k], b.temporary[s.ix()][k], b.aeternal[s.ix()][k]);
                if !(got <= e && e <= t && t <= a) {
                    return Ok((false, format!("{}[{k}]: resolved {got}, bounds {e} {t} {a}", r.program.name(s))));
                }
                checked += 1;
            }
        }
    }
    Ok((true, format!("{checked} instant variables")))
}

fn bounded_memory(cfg: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let spec = load(fixtures::TEMPERATURE)?;
    let m = cfg.length.max(1000);
    let inputs = ingest::synthetic(&spec, m, cfg.seed, &BTreeMap::new())?;
    let exp = experiment(&spec, &inputs, &normal_peak(cfg.seed, m / 10, 25), &RunConfig::default(), &[])?;
    let r = &exp.result;
    let exact = analysis::mtr_exact(&r.program, r.len, &r.trace)?;
    let bound = analysis::memory_bound(&r.program, r.len, &exact, &r.trace)?;
    let root = r.program.node_of(r.program.id("alarm").expect("fixture has alarm"));
    let series = r.memory_series(root);
    let window = (m / 5) as usize;
    let late = series[series.len() - window..].iter().max().copied().unwrap_or(0);
    let mid = series[window..2 * window].iter().max().copied().unwrap_or(0);
    let within = r
        .program
        .node_ids()
        .all(|n| r.memory_series(n).iter().enumerate().all(|(t, x)| *x <= bound[n.ix()].get(t).copied().unwrap_or(0)));
    Ok((within && late.abs_diff(mid) <= 2, format!("root node peak {mid} mid-run, {late} at the end")))
}

/// A chain `x -> n1 -> n2 -> root` plus `extra` independent side chains on
/// their own nodes.
fn chain_with_side_monitors(extra: usize) -> String {
    let mut s = String::from(
        "@1{ input num x }\n@2{ define num a = x + a[-1|0] / 2 }\n@3{ define num b = MAX(a, a[-2|0]) }\n@0{ output num root = b + x[-1|0] }\n",
    );
    for i in 0..extra {
        s.push_str(&format!("@{}{{ input num u{i} }}\n@{}{{ output num v{i} = u{i} * 2 }}\n", 10 + 2 * i, 11 + 2 * i));
    }
    s
}

fn monitor_count(cfg: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let mut peaks = Vec::new();
    for extra in [0, 2, 6] {
        let spec = load(&chain_with_side_monitors(extra))?;
        let inputs = ingest::synthetic(&spec, 1000, cfg.seed, &BTreeMap::new())?;
        let exp = experiment(&spec, &inputs, &normal_peak(cfg.seed, 300, 10), &RunConfig::default(), &[])?;
        let p = &exp.result.program;
        let root = p.node_of(p.id("root").expect("root"));
        peaks.push((p.nodes.len(), exp.result.peak_memory()[root.ix()]));
    }
    let same = peaks.iter().all(|(_, m)| *m == peaks[0].1);
    Ok((same, format!("(nodes, root peak memory): {peaks:?}")))
}

/// Per index of the redundant fixture: verdict, observed TTR of the root,
/// and the arrival at the root (relative to the index) of the faster and
/// the slower branch. Needs a run that recorded its messages.
pub fn redundancy_profile(r: &RunResult) -> Vec<(bool, u64, u64, u64)> {
    let p = &r.program;
    let alarm = p.id("alarm").expect("fixture has alarm");
    let root = p.node_of(alarm);
    let branches = [p.id("risk").expect("fixture branch"), p.id("risk_red").expect("fixture branch")];
    let mut arrival: BTreeMap<(StreamId, u64), u64> = BTreeMap::new();
    for m in &r.messages {
        if m.kind == MsgKind::Resp && m.dst == root && branches.contains(&m.var.stream) {
            arrival.insert((m.var.stream, m.var.index), m.arrives_at);
        }
    }
    (0..r.len)
        .map(|k| {
            let verdict = r.outputs.streams["alarm"][k as usize] == Value::Bool(true);
            let observed = r.resolved[alarm.ix()][k as usize].resolved_at - k;
            let [a, b] = branches.map(|s| arrival.get(&(s, k)).copied().unwrap_or(u64::MAX) - k);
            (verdict, observed, a.min(b), a.max(b))
        })
        .collect()
}

/// Peak on every link into and out of node `3`.
pub fn redundancy_model(seed: u64, start: u64) -> DelayModel {
    let base = DelayKind::Normal { mean: 2.0, stddev: 0.5, seed };
    let peak = DelayKind::ConstantPeak { base: 2, peak_start: start, peak_height: 20, recovery_slope: 1 };
    let mut m = DelayModel::uniform(base);
    for other in ["0", "1", "2"] {
        m = m.with_override("3", other, peak.clone()).with_override(other, "3", peak.clone());
    }
    m
}

fn redundancy(cfg: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let spec = load(fixtures::REDUNDANT)?;
    let dists = BTreeMap::from([
        ("temp".to_string(), InputDist::Normal { mean: 32.0, stddev: 4.0 }),
        ("hum".to_string(), InputDist::Normal { mean: 40.0, stddev: 8.0 }),
    ]);
    let inputs = ingest::synthetic(&spec, 300, cfg.seed, &dists)?;
    let run = RunConfig { record_messages: true, ..RunConfig::default() };
    let exp = experiment(&spec, &inputs, &redundancy_model(cfg.seed, 50), &run, &[])?;
    let prof = redundancy_profile(&exp.result);
    let tracks = prof.iter().all(|&(v, o, fast, slow)| o == if v { fast } else { slow });
    let gains = prof.iter().filter(|&&(v, o, _, slow)| v && o < slow).count();
    Ok((tracks && gains > 0, format!("{gains} true verdicts resolved ahead of the slow branch")))
}

fn split_cycle(_: &SuiteConfig) -> Result<(bool, String), HarnessError> {
    let spec = load(fixtures::MUTUAL)?;
    let class = classify_spec(&spec);
    let exp = experiment(&spec, &Valuation::new(100), &DelayModel::constant(2), &RunConfig::default(), &[])?;
    let r = &exp.result;
    let twice = (0..100).all(|n| r.resolved_at("a", n) == Some(2 * n) && r.resolved_at("b", n) == Some(2 * n));
    let ok = twice && class.efficiently_monitorable && !class.decentralized_efficiently_monitorable;
    Ok((
        ok,
        format!(
            "efficiently monitorable {}, decentralized {}",
            class.efficiently_monitorable, class.decentralized_efficiently_monitorable
        ),
    ))
}

/// Root node of a run, for callers that only know the stream.
pub fn node_of(r: &RunResult, stream: &str) -> Option<NodeIdx> {
    r.program.id(stream).map(|s| r.program.node_of(s))
}
