//! Decentralized stream runtime verification over timed asynchronous
//! networks.
//!
//! A specification assigns every stream to a network node. Each node runs a
//! local monitor that instantiates its streams tick by tick, exchanges
//! values with other nodes over a simulated network with per-pair delays,
//! and resolves instant variables by partial evaluation. The crate also
//! carries a centralized reference evaluator, the structural analyses of
//! the dependency graph, resolution-time bounds, and an experiment harness.

pub mod analysis;
pub mod generate;
pub mod graphs;
pub mod harness;
pub mod monitor;
pub mod netsim;
pub mod oracle;
pub mod program;
pub mod specdsl;
pub mod terms;
pub mod value;

pub use graphs::{DependencyGraph, MonitorabilityReport};
pub use monitor::{RunConfig, RunResult};
pub use netsim::{DelayKind, DelayModel};
pub use oracle::Valuation;
pub use program::{NodeIdx, Program, StreamId};
pub use specdsl::{load, parse, Comm, NodeId, SpecError, Specification, StreamKind, StreamVar, Term};
pub use terms::{ITerm, InstantVar};
pub use value::{DataType, EvalError, Func, Value};

/// Discrete simulation time.
pub type Tick = u64;
