//! Experiment runner: loads a specification and a trace, runs the
//! decentralized monitors, checks them against the centralized evaluator
//! and writes metric files.
//!
//! Output files of one experiment (all CSV except the report):
//! `outputs.csv`, `ttr.csv`, `resolved.csv`, `memory.csv`, `metrics.csv`,
//! `messages.csv`, `bounds.csv`, `report.json`. Nothing is written unless
//! the outputs agree with the centralized evaluation.

pub mod export;
pub mod fixtures;
pub mod ingest;
pub mod suite;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::graphs::{classify_spec, MonitorabilityReport};
use crate::monitor::{self, CommMode, MessageTotals, MonitorError, Pruning, RunConfig, RunResult};
use crate::netsim::{DelayModel, DelayParseError};
use crate::oracle::{self, Mismatch, OracleError, Valuation, NUM_TOLERANCE};
use crate::specdsl::{load, SpecError, Specification, StreamKind};
use crate::terms::Simplifier;

pub use ingest::InputDist;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Spec(#[from] SpecError),
    #[error("trace: {0}")]
    Trace(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Delay(#[from] DelayParseError),
    #[error("centralized evaluation failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("monitoring failed: {0}")]
    Monitor(#[from] MonitorError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("decentralized outputs differ from the centralized evaluation at {0}")]
    Mismatch(Mismatch),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Delay model given either as text (`constant:2`, inline JSON) or as a
/// structured table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySource {
    Text(String),
    Model(DelayModel),
}

impl DelaySource {
    /// Text naming an existing file is read as JSON from that file.
    pub fn resolve(&self) -> Result<DelayModel, HarnessError> {
        match self {
            DelaySource::Model(m) => Ok(m.clone()),
            DelaySource::Text(t) => {
                let p = Path::new(t);
                if p.is_file() {
                    let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Io(t.clone(), e.to_string()))?;
                    Ok(text.parse()?)
                } else {
                    Ok(t.parse()?)
                }
            }
        }
    }
}

impl Default for DelaySource {
    fn default() -> Self {
        DelaySource::Text("constant:1".into())
    }
}

fn default_length() -> u64 {
    100
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: PathBuf,
    /// CSV trace; a synthetic trace of `length` ticks is used without one.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default = "default_length")]
    pub length: u64,
    #[serde(default)]
    pub seed: u64,
    /// Synthetic distributions per input stream.
    #[serde(default)]
    pub inputs: BTreeMap<String, InputDist>,
    #[serde(default)]
    pub delays: DelaySource,
    #[serde(default)]
    pub mode: CommMode,
    #[serde(default)]
    pub simplifier: Simplifier,
    #[serde(default)]
    pub pruning: Pruning,
    /// Cyclic repetition factor applied to the input trace.
    #[serde(default = "one")]
    pub extend: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Streams to report; all `output` streams when empty.
    #[serde(default)]
    pub streams: Vec<String>,
}

impl ExperimentConfig {
    pub fn new(spec: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            spec: spec.into(),
            trace: None,
            length: default_length(),
            seed: 0,
            inputs: BTreeMap::new(),
            delays: DelaySource::default(),
            mode: CommMode::Declared,
            simplifier: Simplifier::Full,
            pruning: Pruning::Confirm,
            extend: 1,
            out: None,
            streams: Vec::new(),
        }
    }

    /// Reads TOML (`.toml`) or JSON; relative paths inside are taken
    /// relative to the file.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
        let mut cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.spec);
        if let Some(t) = cfg.trace.as_mut() {
            rebase(t);
        }
        if let Some(o) = cfg.out.as_mut() {
            rebase(o);
        }
        Ok(cfg)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            comm: self.mode,
            simplifier: self.simplifier,
            pruning: self.pruning,
            record_messages: self.out.is_some(),
        }
    }
}

pub fn load_spec(path: &Path) -> Result<Specification, HarnessError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
    Ok(load(&text)?)
}

/// Trace from a CSV file or the synthetic generator, then extended.
pub fn load_inputs(
    spec: &Specification,
    trace: Option<&Path>,
    length: u64,
    seed: u64,
    dists: &BTreeMap<String, InputDist>,
    extend: u64,
) -> Result<Valuation, HarnessError> {
    let v = match trace {
        Some(p) => ingest::ingest_path(p, spec)?,
        None => {
            if length == 0 {
                return Err(HarnessError::Config("length must be at least 1".into()));
            }
            ingest::synthetic(spec, length, seed, dists)?
        }
    };
    Ok(ingest::extend(&v, extend))
}

/// Names of the `output` streams.
pub fn output_streams(spec: &Specification) -> Vec<String> {
    spec.outputs().filter(|s| s.kind == StreamKind::Output).map(|s| s.name.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtrSummary {
    pub stream: String,
    pub min: u64,
    pub median: u64,
    pub max: u64,
}

impl TtrSummary {
    pub fn of(stream: &str, ttr: &[u64]) -> TtrSummary {
        let mut v = ttr.to_vec();
        v.sort_unstable();
        let pick = |i: usize| v.get(i).copied().unwrap_or(0);
        TtrSummary {
            stream: stream.to_string(),
            min: pick(0),
            median: pick(v.len() / 2),
            max: pick(v.len().saturating_sub(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub classification: MonitorabilityReport,
    pub length: u64,
    pub delays: String,
    pub mode: CommMode,
    pub ttr: Vec<TtrSummary>,
    pub peak_memory: BTreeMap<String, u64>,
    pub messages: MessageTotals,
    /// Tick at which every monitor was done.
    pub end: u64,
    /// Whether the specification guarantees bounded memory and resolution
    /// times under bounded delays.
    pub trace_length_independent: bool,
    pub warnings: Vec<String>,
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: Specification,
    pub inputs: Valuation,
    pub expected: Valuation,
    pub result: RunResult,
    pub report: Report,
}

/// Runs the monitors, requires agreement with the centralized evaluation,
/// and summarizes.
pub fn experiment(
    spec: &Specification,
    inputs: &Valuation,
    model: &DelayModel,
    cfg: &RunConfig,
    streams: &[String],
) -> Result<Experiment, HarnessError> {
    let classification = classify_spec(spec);
    let expected = oracle::evaluate(spec, inputs)?;
    let result = monitor::run(spec, inputs, model, cfg)?;
    if let Some(m) = expected.first_mismatch(&result.outputs, NUM_TOLERANCE) {
        return Err(HarnessError::Mismatch(m));
    }
    let mut warnings = Vec::new();
    if !classification.decentralized_efficiently_monitorable {
        warnings
            .push("specification is not decentralized efficiently monitorable; memory may grow with the trace".into());
    }
    let ttr = streams.iter().map(|s| TtrSummary::of(s, &result.ttr(s))).collect();
    let peak = result.peak_memory();
    let peak_memory =
        result.program.node_ids().map(|n| (result.program.node_name(n).to_string(), peak[n.ix()])).collect();
    let report = Report {
        trace_length_independent: classification.decentralized_efficiently_monitorable,
        classification,
        length: inputs.len,
        delays: model.to_string(),
        mode: cfg.comm,
        ttr,
        peak_memory,
        messages: result.totals,
        end: result.end,
        warnings,
    };
    Ok(Experiment { spec: spec.clone(), inputs: inputs.clone(), expected, result, report })
}

/// Loads, runs, verifies and, if `cfg.out` is set, writes every file.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let spec = load_spec(&cfg.spec)?;
    let inputs = load_inputs(&spec, cfg.trace.as_deref(), cfg.length, cfg.seed, &cfg.inputs, cfg.extend)?;
    let model = cfg.delays.resolve()?;
    let streams = if cfg.streams.is_empty() { output_streams(&spec) } else { cfg.streams.clone() };
    let exp = experiment(&spec, &inputs, &model, &cfg.run_config(), &streams)?;
    if let Some(dir) = &cfg.out {
        write_all(dir, &exp, &streams)?;
    }
    Ok(exp)
}

fn create(dir: &Path, name: &str) -> Result<std::fs::File, HarnessError> {
    let p = dir.join(name);
    std::fs::File::create(&p).map_err(|e| HarnessError::Io(p.display().to_string(), e.to_string()))
}

/// Writes the files listed in the module documentation into `dir`.
pub fn write_all(dir: &Path, exp: &Experiment, streams: &[String]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e.to_string()))?;
    let r = &exp.result;
    export::outputs(create(dir, "outputs.csv")?, &r.outputs, streams)?;
    export::ttr(create(dir, "ttr.csv")?, r, streams)?;
    export::resolved(create(dir, "resolved.csv")?, r)?;
    export::memory(create(dir, "memory.csv")?, r)?;
    export::metrics(create(dir, "metrics.csv")?, r)?;
    export::messages(create(dir, "messages.csv")?, r)?;
    let b = analysis::bounds(&r.program, r.len, &r.trace)?;
    export::bounds(create(dir, "bounds.csv")?, r, &b, streams)?;
    let json = serde_json::to_string_pretty(&exp.report).expect("report serializes");
    std::fs::write(dir.join("report.json"), json + "\n")
        .map_err(|e| HarnessError::Io(dir.join("report.json").display().to_string(), e.to_string()))?;
    Ok(())
}

/// Timed-asynchronous monitoring against a synchronous emulation that
/// waits for the worst delay of the same trace on every link.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncComparison {
    pub stream: String,
    /// Constant delay of the synchronous run.
    pub sync_delay: u64,
    pub async_ttr: Vec<u64>,
    pub sync_ttr: Vec<u64>,
    pub async_peak_memory: u64,
    pub sync_peak_memory: u64,
    /// Mean synchronous TTR over mean asynchronous TTR.
    pub ttr_ratio: f64,
    pub memory_ratio: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

pub fn compare_sync(
    spec: &Specification,
    inputs: &Valuation,
    model: &DelayModel,
    cfg: &RunConfig,
    stream: &str,
) -> Result<SyncComparison, HarnessError> {
    let streams = [stream.to_string()];
    let asy = experiment(spec, inputs, model, cfg, &streams)?;
    let w = asy.result.trace.max_delay();
    let syn = experiment(spec, inputs, &DelayModel::constant(w), cfg, &streams)?;
    let async_ttr = asy.result.ttr(stream);
    let sync_ttr = syn.result.ttr(stream);
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len().max(1) as f64;
    let async_peak_memory = asy.result.peak_memory().into_iter().max().unwrap_or(0);
    let sync_peak_memory = syn.result.peak_memory().into_iter().max().unwrap_or(0);
    Ok(SyncComparison {
        stream: stream.to_string(),
        sync_delay: w,
        ttr_ratio: ratio(mean(&sync_ttr), mean(&async_ttr)),
        memory_ratio: ratio(sync_peak_memory as f64, async_peak_memory as f64),
        async_ttr,
        sync_ttr,
        async_peak_memory,
        sync_peak_memory,
    })
}
