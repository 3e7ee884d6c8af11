//! Reference evaluators kept in test code. They evaluate on demand with
//! memoization, unlike the library's topological evaluator and partial
//! evaluator, and share only the primitive operators with it.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use dsrv_core::{DataType, Func, ITerm, InstantVar, Specification, Term, Valuation, Value};

/// Every stream of `spec` computed from `inputs`, or a message on the first
/// evaluation error.
pub fn reference_eval(spec: &Specification, inputs: &Valuation) -> Result<BTreeMap<String, Vec<Value>>, String> {
    let mut ev = Ev { spec, inputs, memo: HashMap::new() };
    let mut out = BTreeMap::new();
    for s in &spec.streams {
        if s.kind == dsrv_core::StreamKind::Const {
            continue;
        }
        let col = (0..inputs.len).map(|k| ev.at(&s.name, k)).collect::<Result<Vec<_>, _>>()?;
        out.insert(s.name.clone(), col);
    }
    Ok(out)
}

struct Ev<'a> {
    spec: &'a Specification,
    inputs: &'a Valuation,
    memo: HashMap<(String, u64), Value>,
}

impl Ev<'_> {
    fn at(&mut self, name: &str, k: u64) -> Result<Value, String> {
        if let Some(v) = self.memo.get(&(name.to_string(), k)) {
            return Ok(*v);
        }
        let decl = self.spec.stream(name).ok_or(format!("unknown stream {name}"))?;
        let v = match self.spec.equations.get(name) {
            None => self.inputs.get(name, k).ok_or(format!("no input {name}[{k}]"))?,
            Some(eq) => {
                let raw = self.term(eq, k)?;
                store(raw, decl.dtype)?
            }
        };
        self.memo.insert((name.to_string(), k), v);
        Ok(v)
    }

    fn term(&mut self, t: &Term, k: u64) -> Result<Value, String> {
        match t {
            Term::Const(v) => Ok(*v),
            Term::Var(n) => match self.spec.constants.get(n) {
                Some(v) => Ok(*v),
                None => self.at(n, k),
            },
            Term::Offset { stream, offset, default } => {
                let j = k as i64 + offset;
                if j < 0 || j >= self.inputs.len as i64 {
                    Ok(*default)
                } else {
                    self.at(stream, j as u64)
                }
            }
            Term::Apply(Func::Ite, a) => {
                let c = self.term(&a[0], k)?;
                let (x, other) = if c == Value::Bool(true) { (&a[1], &a[2]) } else { (&a[2], &a[1]) };
                let v = self.term(x, k)?;
                Ok(widen_if_mixed(v, self.static_type(other)))
            }
            Term::Apply(f, a) => {
                let vals = a.iter().map(|x| self.term(x, k)).collect::<Result<Vec<_>, _>>()?;
                f.apply(&vals).map_err(|e| e.to_string())
            }
        }
    }

    fn static_type(&self, t: &Term) -> DataType {
        dsrv_core::specdsl::term_type(self.spec, t).unwrap_or(DataType::Bool)
    }
}

/// An `if` whose branches mix `int` and `num` yields `num`.
fn widen_if_mixed(v: Value, other: DataType) -> Value {
    match (v, other) {
        (Value::Int(i), DataType::Num) => Value::Num(i as f64),
        _ => v,
    }
}

/// Storing into a stream: `int` and `num` convert, `num` to `int` truncates.
fn store(v: Value, ty: DataType) -> Result<Value, String> {
    match (v, ty) {
        (Value::Int(i), DataType::Num) => Ok(Value::Num(i as f64)),
        (Value::Num(x), DataType::Int) => {
            let t = x.trunc();
            if t.is_finite() && t.abs() < 9.2e18 {
                Ok(Value::Int(t as i64))
            } else {
                Err("overflow".into())
            }
        }
        _ => Ok(v),
    }
}

/// Evaluates an instantiated term with every leaf bound by `theta`.
pub fn eval_iterm(t: &ITerm, theta: &BTreeMap<InstantVar, Value>) -> Option<Value> {
    match t {
        ITerm::Const(v) => Some(*v),
        ITerm::Leaf(l) => theta.get(&l.var).copied(),
        ITerm::Apply(Func::Ite, a) => {
            let c = eval_iterm(&a[0], theta)?;
            let (x, other) = if c == Value::Bool(true) { (&a[1], &a[2]) } else { (&a[2], &a[1]) };
            Some(widen_if_mixed(eval_iterm(x, theta)?, other.dtype()))
        }
        ITerm::Apply(f, a) => {
            let vals = a.iter().map(|x| eval_iterm(x, theta)).collect::<Option<Vec<_>>>()?;
            f.apply(&vals).ok()
        }
    }
}

/// Equality used for `num` comparisons across evaluators.
pub fn close(a: &Value, b: &Value) -> bool {
    a.approx_eq(b, 1e-9)
}
