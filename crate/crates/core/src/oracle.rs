//! Centralized reference evaluator.
//!
//! Works on the named [`Term`] form and visits instant variables in a
//! topological order of the evaluation graph, so it shares no code with
//! the partial evaluator the monitors use.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::graphs::{check_well_formed, DependencyGraph, EvaluationGraph};
use crate::program::Program;
use crate::specdsl::{term_type, Specification, StreamKind, Term};
use crate::value::{DataType, EvalError, Func, Value};

/// Absolute tolerance for comparing `num` streams.
pub const NUM_TOLERANCE: f64 = 1e-9;

/// One sequence of values per stream, all of the same length.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Valuation {
    pub len: u64,
    pub streams: BTreeMap<String, Vec<Value>>,
}

impl Valuation {
    pub fn new(len: u64) -> Self {
        Valuation { len, streams: BTreeMap::new() }
    }

    pub fn get(&self, stream: &str, k: u64) -> Option<Value> {
        self.streams.get(stream).and_then(|v| v.get(k as usize)).copied()
    }

    pub fn insert(&mut self, stream: impl Into<String>, values: Vec<Value>) {
        self.streams.insert(stream.into(), values);
    }

    /// Keeps only the named streams.
    pub fn restrict<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Valuation {
        let mut out = Valuation::new(self.len);
        for n in names {
            if let Some(v) = self.streams.get(n) {
                out.insert(n, v.clone());
            }
        }
        out
    }

    /// First position where the two valuations disagree, comparing every
    /// stream of `self`.
    pub fn first_mismatch(&self, other: &Valuation, tol: f64) -> Option<Mismatch> {
        for (name, xs) in &self.streams {
            let Some(ys) = other.streams.get(name) else {
                return Some(Mismatch { stream: name.clone(), index: 0, expected: xs.first().copied(), actual: None });
            };
            for k in 0..xs.len().max(ys.len()) {
                let (x, y) = (xs.get(k).copied(), ys.get(k).copied());
                let same = match (x, y) {
                    (Some(a), Some(b)) => a.approx_eq(&b, tol),
                    _ => false,
                };
                if !same {
                    return Some(Mismatch { stream: name.clone(), index: k as u64, expected: x, actual: y });
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub stream: String,
    pub index: u64,
    pub expected: Option<Value>,
    pub actual: Option<Value>,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |v: Option<Value>| v.map_or("<missing>".to_string(), |v| v.to_string());
        write!(f, "{}[{}]: expected {}, got {}", self.stream, self.index, show(self.expected), show(self.actual))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{stream}[{index}]: {source}")]
    Eval { stream: String, index: u64, source: EvalError },
    #[error("specification is not well-formed")]
    NotWellFormed,
    #[error("bad input valuation: {0}")]
    Inputs(String),
}

/// Value of `t` at index `j` under `sigma`.
///
/// `if` evaluates only the chosen branch; all other operators are strict.
pub fn eval_term(spec: &Specification, t: &Term, sigma: &Valuation, j: u64) -> Result<Value, EvalError> {
    match t {
        Term::Const(v) => Ok(*v),
        Term::Var(n) => match spec.constants.get(n) {
            Some(v) => Ok(*v),
            None => sigma.get(n, j).ok_or_else(|| EvalError::Type(format!("no value for {n}[{j}]"))),
        },
        Term::Offset { stream, offset, default } => {
            let i = j as i64 + offset;
            if i < 0 || i >= sigma.len as i64 {
                Ok(*default)
            } else {
                sigma.get(stream, i as u64).ok_or_else(|| EvalError::Type(format!("no value for {stream}[{i}]")))
            }
        }
        Term::Apply(Func::Ite, args) => {
            let c = eval_term(spec, &args[0], sigma, j)?;
            let chosen = match c {
                Value::Bool(true) => &args[1],
                Value::Bool(false) => &args[2],
                v => return Err(EvalError::Type(format!("`if` condition {v}"))),
            };
            let v = eval_term(spec, chosen, sigma, j)?;
            if v.data_type() == DataType::Int && term_type(spec, t) == Ok(DataType::Num) {
                v.coerce(DataType::Num)
            } else {
                Ok(v)
            }
        }
        Term::Apply(f, args) => {
            let vals = args.iter().map(|a| eval_term(spec, a, sigma, j)).collect::<Result<Vec<_>, _>>()?;
            f.apply(&vals)
        }
    }
}

/// Computes every defined stream from the inputs.
pub fn evaluate(spec: &Specification, inputs: &Valuation) -> Result<Valuation, OracleError> {
    let m = inputs.len;
    if m == 0 {
        return Err(OracleError::Inputs("trace length must be positive".into()));
    }
    for s in spec.inputs() {
        match inputs.streams.get(&s.name) {
            None => return Err(OracleError::Inputs(format!("missing input `{}`", s.name))),
            Some(v) if v.len() as u64 != m => {
                return Err(OracleError::Inputs(format!("input `{}` has {} values, expected {m}", s.name, v.len())))
            }
            Some(v) => {
                if let Some(bad) = v.iter().find(|x| x.data_type() != s.dtype) {
                    return Err(OracleError::Inputs(format!("input `{}` holds {bad}, expected {}", s.name, s.dtype)));
                }
            }
        }
    }
    let program = Program::new(spec);
    if !check_well_formed(&DependencyGraph::from_program(&program)).well_formed {
        return Err(OracleError::NotWellFormed);
    }
    let order = EvaluationGraph::new(&program, m).topological_order().ok_or(OracleError::NotWellFormed)?;

    let mut sigma = Valuation::new(m);
    for s in spec.signals() {
        let seq = match s.kind {
            StreamKind::Input => inputs.streams[&s.name].clone(),
            _ => vec![Value::zero(s.dtype); m as usize],
        };
        sigma.insert(s.name.clone(), seq);
    }
    for (sid, k) in order {
        let info = program.stream(sid);
        let Some(eq) = spec.equations.get(&info.name) else { continue };
        let v = eval_term(spec, eq, &sigma, k)
            .and_then(|v| v.coerce(info.dtype))
            .map_err(|source| OracleError::Eval { stream: info.name.clone(), index: k, source })?;
        sigma.streams.get_mut(&info.name).expect("seeded")[k as usize] = v;
    }
    Ok(sigma)
}

/// Pointwise re-evaluation of every equation; returns the first index where
/// `sigma` violates the specification.
pub fn verify(spec: &Specification, sigma: &Valuation) -> Result<(), Mismatch> {
    for s in spec.signals() {
        let Some(eq) = spec.equations.get(&s.name) else { continue };
        for j in 0..sigma.len {
            let expected = eval_term(spec, eq, sigma, j).and_then(|v| v.coerce(s.dtype)).ok();
            let actual = sigma.get(&s.name, j);
            let ok = matches!((expected, actual), (Some(a), Some(b)) if a.approx_eq(&b, NUM_TOLERANCE));
            if !ok {
                return Err(Mismatch { stream: s.name.clone(), index: j, expected, actual });
            }
        }
    }
    Ok(())
}
