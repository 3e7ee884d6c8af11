//! Input traces: CSV ingestion with gap filling, cyclic extension and
//! seeded synthetic generation.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::oracle::Valuation;
use crate::specdsl::Specification;
use crate::value::{DataType, Value};

/// Reads one row per tick; the header names input streams. Empty cells are
/// filled by linear interpolation for `num` columns and by holding the
/// previous value for `bool` and `int` columns (the next value at the
/// start of a column).
pub fn ingest<R: Read>(reader: R, spec: &Specification) -> Result<Valuation, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| HarnessError::Trace(e.to_string()))?.clone();
    let mut cols: Vec<(String, DataType)> = Vec::new();
    for name in header.iter() {
        match spec.inputs().find(|s| s.name == name) {
            Some(s) => cols.push((name.to_string(), s.dtype)),
            None => return Err(HarnessError::Trace(format!("unknown column `{name}`"))),
        }
    }
    if let Some(missing) = spec.inputs().find(|s| !cols.iter().any(|(c, _)| *c == s.name)) {
        return Err(HarnessError::Trace(format!("no column for input `{}`", missing.name)));
    }
    let mut raw: Vec<Vec<Option<Value>>> = vec![Vec::new(); cols.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Trace(e.to_string()))?;
        for (i, (name, ty)) in cols.iter().enumerate() {
            let cell = rec.get(i).unwrap_or("");
            let v = if cell.is_empty() {
                None
            } else {
                Some(parse_cell(cell, *ty).ok_or_else(|| {
                    HarnessError::Trace(format!("row {}: cannot read `{cell}` as {ty} for `{name}`", line + 2))
                })?)
            };
            raw[i].push(v);
        }
    }
    let len = raw.first().map_or(0, Vec::len);
    if len == 0 {
        return Err(HarnessError::Trace("trace has no rows".into()));
    }
    let mut out = Valuation::new(len as u64);
    for ((name, ty), col) in cols.into_iter().zip(raw) {
        let filled = fill_gaps(&col, ty).ok_or_else(|| HarnessError::Trace(format!("column `{name}` is empty")))?;
        out.insert(name, filled);
    }
    Ok(out)
}

pub fn ingest_path(path: &Path, spec: &Specification) -> Result<Valuation, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?;
    ingest(f, spec)
}

fn parse_cell(cell: &str, ty: DataType) -> Option<Value> {
    match ty {
        DataType::Bool => match cell {
            "true" | "1" => Some(Value::Bool(true)),
            "false" | "0" => Some(Value::Bool(false)),
            _ => None,
        },
        DataType::Int => cell.parse().ok().map(Value::Int),
        DataType::Num => cell.parse().ok().filter(|x: &f64| x.is_finite()).map(Value::Num),
    }
}

fn fill_gaps(col: &[Option<Value>], ty: DataType) -> Option<Vec<Value>> {
    let known: Vec<usize> = (0..col.len()).filter(|i| col[*i].is_some()).collect();
    let first = *known.first()?;
    let mut out = Vec::with_capacity(col.len());
    for (i, v) in col.iter().enumerate() {
        if let Some(v) = v {
            out.push(*v);
            continue;
        }
        if i < first {
            out.push(col[first].expect("known"));
            continue;
        }
        let prev = out[i - 1];
        let next = known.iter().find(|&&j| j > i).copied();
        let v = match (ty, next) {
            (DataType::Num, Some(j)) => {
                // Interpolate between the last known cell before i and cell j.
                let p = known.iter().rev().find(|&&q| q < i).copied().expect("i > first");
                let (a, b) = (col[p].and_then(|v| v.as_f64())?, col[j].and_then(|v| v.as_f64())?);
                Value::Num(a + (b - a) * (i - p) as f64 / (j - p) as f64)
            }
            _ => prev,
        };
        out.push(v);
    }
    Some(out)
}

/// Repeats the rows of `v` cyclically until it is `factor` times as long.
pub fn extend(v: &Valuation, factor: u64) -> Valuation {
    let factor = factor.max(1);
    let mut out = Valuation::new(v.len * factor);
    for (name, col) in &v.streams {
        out.insert(name.clone(), col.iter().copied().cycle().take((v.len * factor) as usize).collect());
    }
    out
}

/// Per-input distribution of a synthetic trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum InputDist {
    Bernoulli { p: f64 },
    UniformInt { lo: i64, hi: i64 },
    Normal { mean: f64, stddev: f64 },
}

impl InputDist {
    pub fn default_for(ty: DataType) -> InputDist {
        match ty {
            DataType::Bool => InputDist::Bernoulli { p: 0.5 },
            DataType::Int => InputDist::UniformInt { lo: 0, hi: 10 },
            DataType::Num => InputDist::Normal { mean: 20.0, stddev: 5.0 },
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, ty: DataType) -> Result<Value, HarnessError> {
        let v = match *self {
            InputDist::Bernoulli { p } => Value::Bool(rng.random_bool(p.clamp(0.0, 1.0))),
            InputDist::UniformInt { lo, hi } => Value::Int(rng.random_range(lo.min(hi)..=hi.max(lo))),
            InputDist::Normal { mean, stddev } => {
                let n = Normal::new(mean, stddev).map_err(|e| HarnessError::Config(e.to_string()))?;
                Value::Num(n.sample(rng))
            }
        };
        v.coerce(ty).map_err(|e| HarnessError::Config(format!("distribution does not fit a {ty} input: {e}")))
    }
}

/// A seeded trace of length `len` for every input of `spec`, one
/// independent generator per stream.
pub fn synthetic(
    spec: &Specification,
    len: u64,
    seed: u64,
    dists: &BTreeMap<String, InputDist>,
) -> Result<Valuation, HarnessError> {
    let mut out = Valuation::new(len);
    for (i, s) in spec.inputs().enumerate() {
        let d = dists.get(&s.name).copied().unwrap_or_else(|| InputDist::default_for(s.dtype));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let col = (0..len).map(|_| d.sample(&mut rng, s.dtype)).collect::<Result<Vec<_>, _>>()?;
        out.insert(s.name.clone(), col);
    }
    Ok(out)
}
