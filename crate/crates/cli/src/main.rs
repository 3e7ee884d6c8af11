//! `dsrv`: check specifications, evaluate them centrally, simulate the
//! decentralized monitors and analyse resolution bounds.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 specification rejected,
//! 3 decentralized outputs differ from the centralized evaluation, 4 a
//! regression check failed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsrv_core::analysis::{self, ttr_sync};
use dsrv_core::graphs::classify_spec;
use dsrv_core::harness::suite::{run_suite, SuiteConfig};
use dsrv_core::harness::{
    compare_sync, experiment, export, load_inputs, load_spec, output_streams, run_experiment, write_all, DelaySource,
    ExperimentConfig, HarnessError,
};
use dsrv_core::monitor::{CommMode, MonitorError, Pruning};
use dsrv_core::oracle::{self, OracleError};
use dsrv_core::terms::Simplifier;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dsrv", version, about = "Decentralized stream runtime verification simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, type check and classify a specification.
    Check {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Evaluate a specification centrally and print every stream as CSV.
    Oracle(Setup),
    /// Simulate the decentralized monitors and print the report.
    Run(Setup),
    /// Classification and resolution bounds of a simulated run.
    Analyze {
        #[command(flatten)]
        setup: Setup,
        /// Print `stream,index,mtr_exact,mtr_temporary,mtr_aeternal,ttr_observed`.
        #[arg(long)]
        bounds: bool,
    },
    /// Compare against a synchronous emulation using the worst delay of the trace.
    CompareSync {
        #[command(flatten)]
        setup: Setup,
        /// Stream to compare; the first output stream by default.
        #[arg(long)]
        stream: Option<String>,
    },
    /// Run the regression battery over the bundled fixtures.
    Suite {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 6000)]
        length: u64,
    },
}

#[derive(Args)]
struct Setup {
    /// Experiment file (TOML or JSON); flags given alongside override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    /// CSV input trace; synthetic inputs are generated without one.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Delay model file, or `constant:D`, `constantPeak:B,S,H,R`,
    /// `normal:MEAN,SD,SEED`, `normalPeak:MEAN,SD,SEED,S,H,R`.
    #[arg(long)]
    delays: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    simplifier: Option<Simp>,
    /// `confirm`, `keep` or `ttl:BOUND`.
    #[arg(long, value_parser = parse_pruning)]
    pruning: Option<Pruning>,
    /// Length of a synthetic trace.
    #[arg(long)]
    length: Option<u64>,
    /// Repeat the trace this many times.
    #[arg(long)]
    extend: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV files and the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Declared,
    Eager,
    Lazy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Simp {
    Full,
    Strict,
}

fn parse_pruning(s: &str) -> Result<Pruning, String> {
    match s {
        "confirm" => Ok(Pruning::Confirm),
        "keep" => Ok(Pruning::Keep),
        _ => s
            .strip_prefix("ttl:")
            .and_then(|b| b.parse().ok())
            .map(|bound| Pruning::Ttl { bound })
            .ok_or_else(|| format!("expected `confirm`, `keep` or `ttl:BOUND`, got `{s}`")),
    }
}

impl Setup {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match (&self.config, &self.spec) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(spec)) => ExperimentConfig::new(spec),
            (None, None) => return Err(HarnessError::Config("either --spec or --config is required".into())),
        };
        if let Some(s) = &self.spec {
            cfg.spec = s.clone();
        }
        if let Some(t) = &self.trace {
            cfg.trace = Some(t.clone());
        }
        if let Some(d) = &self.delays {
            cfg.delays = DelaySource::Text(d.clone());
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                Mode::Declared => CommMode::Declared,
                Mode::Eager => CommMode::Eager,
                Mode::Lazy => CommMode::Lazy,
            };
        }
        if let Some(s) = self.simplifier {
            cfg.simplifier = match s {
                Simp::Full => Simplifier::Full,
                Simp::Strict => Simplifier::Strict,
            };
        }
        if let Some(p) = self.pruning {
            cfg.pruning = p;
        }
        if let Some(n) = self.length {
            cfg.length = n;
        }
        if let Some(n) = self.extend {
            cfg.extend = n;
        }
        if let Some(n) = self.seed {
            cfg.seed = n;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Spec(_)
        | HarnessError::Oracle(OracleError::NotWellFormed)
        | HarnessError::Monitor(MonitorError::NotWellFormed) => 2,
        HarnessError::Mismatch(_) => 3,
        _ => 1,
    }
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn file_in(dir: &Path, name: &str) -> Result<std::fs::File, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e.to_string()))?;
    let p = dir.join(name);
    std::fs::File::create(&p).map_err(|e| HarnessError::Io(p.display().to_string(), e.to_string()))
}

fn execute(command: Command, out: &mut impl Write) -> Result<u8, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io("stdout".into(), e.to_string());
    match command {
        Command::Check { spec } => {
            let spec = load_spec(&spec)?;
            let class = classify_spec(&spec);
            writeln!(out, "{}", to_json(&class)).map_err(io)?;
            Ok(if class.well_formed { 0 } else { 2 })
        }
        Command::Oracle(setup) => {
            let cfg = setup.config()?;
            let spec = load_spec(&cfg.spec)?;
            let inputs = load_inputs(&spec, cfg.trace.as_deref(), cfg.length, cfg.seed, &cfg.inputs, cfg.extend)?;
            let sigma = oracle::evaluate(&spec, &inputs)?;
            let streams: Vec<String> = spec.signals().map(|s| s.name.clone()).collect();
            match &cfg.out {
                Some(dir) => export::outputs(file_in(dir, "outputs.csv")?, &sigma, &streams)?,
                None => export::outputs(&mut *out, &sigma, &streams)?,
            }
            Ok(0)
        }
        Command::Run(setup) => {
            let exp = run_experiment(&setup.config()?)?;
            writeln!(out, "{}", to_json(&exp.report)).map_err(io)?;
            Ok(0)
        }
        Command::Analyze { setup, bounds } => {
            let cfg = setup.config()?;
            let spec = load_spec(&cfg.spec)?;
            let inputs = load_inputs(&spec, cfg.trace.as_deref(), cfg.length, cfg.seed, &cfg.inputs, cfg.extend)?;
            let streams = if cfg.streams.is_empty() { output_streams(&spec) } else { cfg.streams.clone() };
            let exp = experiment(&spec, &inputs, &cfg.delays.resolve()?, &cfg.run_config(), &streams)?;
            let r = &exp.result;
            if bounds {
                let b = analysis::bounds(&r.program, r.len, &r.trace)?;
                match &cfg.out {
                    Some(dir) => export::bounds(file_in(dir, "bounds.csv")?, r, &b, &streams)?,
                    None => export::bounds(&mut *out, r, &b, &streams)?,
                }
            } else {
                let w = r.trace.max_delay();
                let sync = ttr_sync(&r.program, |a, b| if a == b { 0 } else { w }).ok().map(|t| {
                    streams
                        .iter()
                        .filter_map(|s| r.program.id(s).map(|id| (s.clone(), t[id.ix()])))
                        .collect::<std::collections::BTreeMap<_, _>>()
                });
                let report = json!({
                    "classification": exp.report.classification,
                    "maxDelay": w,
                    "ttrSync": sync,
                    "ttr": exp.report.ttr,
                });
                writeln!(out, "{}", to_json(&report)).map_err(io)?;
                if let Some(dir) = &cfg.out {
                    write_all(dir, &exp, &streams)?;
                }
            }
            Ok(0)
        }
        Command::CompareSync { setup, stream } => {
            let cfg = setup.config()?;
            let spec = load_spec(&cfg.spec)?;
            let inputs = load_inputs(&spec, cfg.trace.as_deref(), cfg.length, cfg.seed, &cfg.inputs, cfg.extend)?;
            let stream = match stream.or_else(|| output_streams(&spec).into_iter().next()) {
                Some(s) => s,
                None => return Err(HarnessError::Config("the specification has no output stream".into())),
            };
            let c = compare_sync(&spec, &inputs, &cfg.delays.resolve()?, &cfg.run_config(), &stream)?;
            writeln!(out, "{}", to_json(&c)).map_err(io)?;
            Ok(0)
        }
        Command::Suite { seed, length } => {
            let checks = run_suite(&SuiteConfig { seed, length });
            for c in &checks {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io)?;
            }
            Ok(if checks.iter().all(|c| c.passed) { 0 } else { 4 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
