//! Workloads shared by the benchmarks: a fixture with a synthetic trace
//! and a delay model.

use std::collections::BTreeMap;

use dsrv_core::harness::{fixtures, ingest};
use dsrv_core::{load, DelayKind, DelayModel, Specification, Valuation};

pub struct Workload {
    pub name: &'static str,
    pub spec: Specification,
    pub inputs: Valuation,
    pub model: DelayModel,
}

/// `len` ticks of seeded inputs under a normal delay with one peak.
pub fn workload(name: &'static str, source: &str, len: u64) -> Workload {
    let spec = load(source).expect("bundled fixture loads");
    let inputs = ingest::synthetic(&spec, len, 1, &BTreeMap::new()).expect("synthetic inputs");
    let model = DelayModel::uniform(DelayKind::NormalPeak {
        mean: 3.0,
        stddev: 1.0,
        seed: 1,
        peak_start: len / 4,
        peak_height: 15,
        recovery_slope: 1,
    });
    Workload { name, spec, inputs, model }
}

pub fn workloads(len: u64) -> Vec<Workload> {
    vec![
        workload("temperature", fixtures::TEMPERATURE, len),
        workload("tree_depth2", fixtures::TREE_DEPTH2, len),
        workload("choice", fixtures::CHOICE, len),
    ]
}
