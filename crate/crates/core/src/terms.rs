//! Instantiated terms and their partial evaluation.
//!
//! An [`ITerm`] is an equation instantiated at a fixed index: offsets have
//! been shifted into instant variables, or into the offset default when the
//! shifted index falls before the trace. Indices past a known end are also
//! replaced by defaults; with an unknown end they stay symbolic until
//! [`finalize`].
//!
//! Simplification rules (applied bottom-up to a fixpoint):
//! - `if true/false` selects a branch
//! - `and`/`or`/`AND`/`OR` absorb and drop their identity elements
//! - `0 * x -> 0` for integer `x`
//! - `x + 0 -> x`, `x - 0 -> x`, `1 * x -> x` where bit-exact for the type
//! - constant folding of ground subterms
//!
//! A subterm whose folding fails (division by zero, overflow) stays
//! symbolic, since an enclosing `if` may still discard it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::program::{Expr, Program, StreamId};
use crate::value::{DataType, EvalError, Func, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstantVar {
    pub stream: StreamId,
    pub index: u64,
}

impl InstantVar {
    pub fn new(stream: StreamId, index: u64) -> Self {
        InstantVar { stream, index }
    }
}

impl fmt::Display for InstantVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}[{}]", self.stream.0, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Leaf {
    pub var: InstantVar,
    pub dtype: DataType,
    /// Value used if the index turns out to lie past the end of the trace.
    pub default: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ITerm {
    Const(Value),
    Leaf(Leaf),
    Apply(Func, Vec<ITerm>),
}

/// How `reduce` treats terms that still contain variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Simplifier {
    /// Apply the rewrite rules.
    #[default]
    Full,
    /// Leave the term alone until it is ground, then evaluate it.
    Strict,
}

impl ITerm {
    pub fn as_const(&self) -> Option<Value> {
        match self {
            ITerm::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn dtype(&self) -> DataType {
        match self {
            ITerm::Const(v) => v.data_type(),
            ITerm::Leaf(l) => l.dtype,
            ITerm::Apply(f, args) => {
                let tys: Vec<DataType> = args.iter().map(ITerm::dtype).collect();
                f.result_type(&tys).unwrap_or(DataType::Num)
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            ITerm::Const(_) => true,
            ITerm::Leaf(_) => false,
            ITerm::Apply(_, args) => args.iter().all(ITerm::is_ground),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            ITerm::Apply(_, args) => 1 + args.iter().map(ITerm::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn for_each_leaf(&self, f: &mut impl FnMut(&Leaf)) {
        match self {
            ITerm::Const(_) => {}
            ITerm::Leaf(l) => f(l),
            ITerm::Apply(_, args) => args.iter().for_each(|a| a.for_each_leaf(f)),
        }
    }

    /// Instant variables in the term, sorted and deduplicated.
    pub fn vars(&self) -> Vec<InstantVar> {
        let mut v = Vec::new();
        self.for_each_leaf(&mut |l| v.push(l.var));
        v.sort();
        v.dedup();
        v
    }
}

impl fmt::Display for ITerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ITerm::Const(v) => write!(f, "{v}"),
            ITerm::Leaf(l) => write!(f, "{}", l.var),
            ITerm::Apply(func, args) => {
                write!(f, "{}(", func.symbol())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Instantiates the equation of `s` at index `k`. Input streams become the
/// bare instant variable `s[k]`.
pub fn instantiate(p: &Program, s: StreamId, k: u64, len: Option<u64>) -> ITerm {
    match &p.stream(s).expr {
        None => ITerm::Leaf(Leaf {
            var: InstantVar::new(s, k),
            dtype: p.stream(s).dtype,
            default: Value::zero(p.stream(s).dtype),
        }),
        Some(e) => inst(p, e, k, len),
    }
}

fn inst(p: &Program, e: &Expr, k: u64, len: Option<u64>) -> ITerm {
    match e {
        Expr::Const(v) => ITerm::Const(*v),
        Expr::Var(v) => {
            let dtype = p.stream(*v).dtype;
            ITerm::Leaf(Leaf { var: InstantVar::new(*v, k), dtype, default: Value::zero(dtype) })
        }
        Expr::Offset { stream, offset, default } => {
            let j = k as i64 + offset;
            if j < 0 || len.is_some_and(|m| j as u64 >= m) {
                ITerm::Const(*default)
            } else {
                ITerm::Leaf(Leaf {
                    var: InstantVar::new(*stream, j as u64),
                    dtype: p.stream(*stream).dtype,
                    default: *default,
                })
            }
        }
        Expr::Apply(f, args) => ITerm::Apply(*f, args.iter().map(|a| inst(p, a, k, len)).collect()),
    }
}

/// Replaces every leaf that `theta` knows by its value.
pub fn substitute(t: &ITerm, theta: &impl Fn(InstantVar) -> Option<Value>) -> Result<ITerm, EvalError> {
    Ok(match t {
        ITerm::Const(_) => t.clone(),
        ITerm::Leaf(l) => match theta(l.var) {
            Some(v) if v.data_type() == l.dtype => ITerm::Const(v),
            Some(v) => {
                return Err(EvalError::Type(format!("{} expects {} but got {v}", l.var, l.dtype)));
            }
            None => t.clone(),
        },
        ITerm::Apply(f, args) => ITerm::Apply(*f, args.iter().map(|a| substitute(a, theta)).collect::<Result<_, _>>()?),
    })
}

/// Replaces leaves at or past `len` by their defaults.
pub fn finalize(t: &ITerm, len: u64) -> ITerm {
    match t {
        ITerm::Leaf(l) if l.var.index >= len => ITerm::Const(l.default),
        ITerm::Apply(f, args) => ITerm::Apply(*f, args.iter().map(|a| finalize(a, len)).collect()),
        _ => t.clone(),
    }
}

/// Evaluates a term, looking leaves up in `theta`. `if` is lazy.
pub fn eval_ground(t: &ITerm, theta: &impl Fn(InstantVar) -> Option<Value>) -> Result<Value, EvalError> {
    match t {
        ITerm::Const(v) => Ok(*v),
        ITerm::Leaf(l) => theta(l.var).ok_or_else(|| EvalError::Type(format!("{} is unresolved", l.var))),
        ITerm::Apply(Func::Ite, args) => {
            let chosen = match eval_ground(&args[0], theta)? {
                Value::Bool(true) => &args[1],
                Value::Bool(false) => &args[2],
                v => return Err(EvalError::Type(format!("`if` condition {v}"))),
            };
            let v = eval_ground(chosen, theta)?;
            if v.data_type() == DataType::Int && t.dtype() == DataType::Num {
                v.coerce(DataType::Num)
            } else {
                Ok(v)
            }
        }
        ITerm::Apply(f, args) => {
            let vals = args.iter().map(|a| eval_ground(a, theta)).collect::<Result<Vec<_>, _>>()?;
            f.apply(&vals)
        }
    }
}

/// Simplifies to a fixpoint. Fails only if the whole term is ground and
/// its evaluation fails.
pub fn simplify(t: &ITerm) -> Result<ITerm, EvalError> {
    let mut cur = t.clone();
    loop {
        let next = simp(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    settle(cur)
}

fn settle(t: ITerm) -> Result<ITerm, EvalError> {
    if matches!(t, ITerm::Apply(..)) && t.is_ground() {
        eval_ground(&t, &|_| None).map(ITerm::Const)
    } else {
        Ok(t)
    }
}

/// Substitutes from `theta`, then simplifies according to `mode`.
pub fn reduce(t: &ITerm, theta: &impl Fn(InstantVar) -> Option<Value>, mode: Simplifier) -> Result<ITerm, EvalError> {
    let s = substitute(t, theta)?;
    match mode {
        Simplifier::Full => simplify(&s),
        Simplifier::Strict => settle(s),
    }
}

fn simp(t: &ITerm) -> ITerm {
    let ITerm::Apply(f, args) = t else { return t.clone() };
    let f = *f;
    let args: Vec<ITerm> = args.iter().map(simp).collect();

    if f == Func::Ite {
        if let Some(Value::Bool(c)) = args[0].as_const() {
            let branch = if c { &args[1] } else { &args[2] };
            let want = ITerm::Apply(f, args.clone()).dtype();
            if branch.dtype() == want {
                return branch.clone();
            }
            if let Some(Ok(v)) = branch.as_const().map(|v| v.coerce(want)) {
                return ITerm::Const(v);
            }
        }
        return ITerm::Apply(f, args);
    }

    if args.iter().all(|a| matches!(a, ITerm::Const(_))) {
        let vals: Vec<Value> = args.iter().filter_map(ITerm::as_const).collect();
        if let Ok(v) = f.apply(&vals) {
            return ITerm::Const(v);
        }
        return ITerm::Apply(f, args);
    }

    let is = |a: &ITerm, v: Value| a.as_const() == Some(v);
    match f {
        Func::And | Func::Or => {
            let (absorb, ident) = if f == Func::And { (false, true) } else { (true, false) };
            if args.iter().any(|a| is(a, Value::Bool(absorb))) {
                return ITerm::Const(Value::Bool(absorb));
            }
            if is(&args[0], Value::Bool(ident)) {
                return args[1].clone();
            }
            if is(&args[1], Value::Bool(ident)) {
                return args[0].clone();
            }
        }
        Func::AndN | Func::OrN => {
            let (absorb, ident) = if f == Func::AndN { (false, true) } else { (true, false) };
            if args.iter().any(|a| is(a, Value::Bool(absorb))) {
                return ITerm::Const(Value::Bool(absorb));
            }
            let rest: Vec<ITerm> = args.iter().filter(|a| !is(a, Value::Bool(ident))).cloned().collect();
            match rest.len() {
                0 => return ITerm::Const(Value::Bool(ident)),
                1 => return rest.into_iter().next().expect("one element"),
                n if n < args.len() => return ITerm::Apply(f, rest),
                _ => {}
            }
        }
        Func::Mul => {
            for (c, x) in [(&args[0], &args[1]), (&args[1], &args[0])] {
                let xt = x.dtype();
                if is(c, Value::Int(0)) && xt == DataType::Int {
                    return ITerm::Const(Value::Int(0));
                }
                if c.as_const().is_some_and(|v| v.is_one()) && DataType::join_numeric(c.dtype(), xt) == xt {
                    return x.clone();
                }
            }
        }
        Func::Add => {
            for (c, x) in [(&args[0], &args[1]), (&args[1], &args[0])] {
                if additive_identity(c, x.dtype(), true) {
                    return x.clone();
                }
            }
        }
        Func::Sub if additive_identity(&args[1], args[0].dtype(), false) => return args[0].clone(),
        _ => {}
    }
    ITerm::Apply(f, args)
}

/// `x + c == x` bit for bit: integer zero for integers; `-0.0` (`+0.0` when
/// subtracting) for floats.
fn additive_identity(c: &ITerm, xt: DataType, adding: bool) -> bool {
    match (c.as_const(), xt) {
        (Some(Value::Int(0)), DataType::Int) => true,
        (Some(Value::Num(z)), DataType::Num) => z == 0.0 && z.is_sign_negative() == adding,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specdsl::parse;

    const ACC_ROOT: &str = "@1{ input bool reset\n input num y }\n@2{ define int acc = y + root[-1|0]\n output int root = if reset then 0 else acc }";

    fn leaf(s: u32, k: u64, dtype: DataType) -> ITerm {
        ITerm::Leaf(Leaf { var: InstantVar::new(StreamId(s), k), dtype, default: Value::zero(dtype) })
    }

    fn app(f: Func, args: Vec<ITerm>) -> ITerm {
        ITerm::Apply(f, args)
    }

    fn c(v: Value) -> ITerm {
        ITerm::Const(v)
    }

    #[test]
    fn instantiate_examples() {
        let p = Program::new(&parse(ACC_ROOT).unwrap());
        let (acc, reset, root, y) = (StreamId(0), StreamId(1), StreamId(2), StreamId(3));
        assert_eq!(p.id("y"), Some(y));
        assert_eq!(instantiate(&p, acc, 0, None), app(Func::Add, vec![leaf(y.0, 0, DataType::Num), c(Value::Int(0))]));
        assert_eq!(
            instantiate(&p, root, 1, None),
            app(Func::Ite, vec![leaf(reset.0, 1, DataType::Bool), c(Value::Int(0)), leaf(acc.0, 1, DataType::Int)])
        );
        assert_eq!(instantiate(&p, y, 7, None), leaf(y.0, 7, DataType::Num));
    }

    #[test]
    fn future_offsets_depend_on_known_length() {
        let p = Program::new(&parse("@1{ input int a\n output int b = a[2|5] }").unwrap());
        let b = p.id("b").unwrap();
        assert!(matches!(instantiate(&p, b, 2, None), ITerm::Leaf(_)));
        assert_eq!(instantiate(&p, b, 2, Some(3)), c(Value::Int(5)));
        let open = instantiate(&p, b, 2, None);
        assert_eq!(finalize(&open, 3), c(Value::Int(5)));
        assert_eq!(finalize(&open, 10), open);
    }

    #[test]
    fn substitute_examples() {
        let y0 = leaf(3, 0, DataType::Int);
        let t = app(Func::Add, vec![y0.clone(), c(Value::Int(0))]);
        let theta = |v: InstantVar| (v == InstantVar::new(StreamId(3), 0)).then_some(Value::Int(5));
        assert_eq!(substitute(&t, &theta).unwrap(), app(Func::Add, vec![c(Value::Int(5)), c(Value::Int(0))]));
        assert_eq!(substitute(&t, &|_| None).unwrap(), t);
        let bad = |_: InstantVar| Some(Value::Bool(true));
        assert!(substitute(&t, &bad).is_err());
    }

    #[test]
    fn conditional_selection() {
        let t = app(Func::Ite, vec![c(Value::Bool(true)), c(Value::Int(0)), leaf(0, 1, DataType::Int)]);
        assert_eq!(simplify(&t).unwrap(), c(Value::Int(0)));
        // A mixed-type conditional keeps its num result type.
        let t = app(Func::Ite, vec![c(Value::Bool(true)), c(Value::Int(2)), leaf(0, 1, DataType::Num)]);
        assert_eq!(simplify(&t).unwrap(), c(Value::Num(2.0)));
        let t = app(Func::Ite, vec![c(Value::Bool(true)), leaf(1, 1, DataType::Int), leaf(0, 1, DataType::Num)]);
        assert_eq!(simplify(&t).unwrap(), t);
    }

    #[test]
    fn boolean_rules() {
        let x = leaf(0, 0, DataType::Bool);
        assert_eq!(simplify(&app(Func::Or, vec![c(Value::Bool(true)), x.clone()])).unwrap(), c(Value::Bool(true)));
        assert_eq!(simplify(&app(Func::Or, vec![c(Value::Bool(false)), x.clone()])).unwrap(), x);
        assert_eq!(simplify(&app(Func::And, vec![x.clone(), c(Value::Bool(true))])).unwrap(), x);
        assert_eq!(simplify(&app(Func::And, vec![x.clone(), c(Value::Bool(false))])).unwrap(), c(Value::Bool(false)));
        let y = leaf(1, 0, DataType::Bool);
        let t = app(Func::AndN, vec![x.clone(), c(Value::Bool(true)), y.clone()]);
        assert_eq!(simplify(&t).unwrap(), app(Func::AndN, vec![x.clone(), y.clone()]));
        let t = app(Func::OrN, vec![x.clone(), c(Value::Bool(true)), y]);
        assert_eq!(simplify(&t).unwrap(), c(Value::Bool(true)));
        let t = app(Func::OrN, vec![c(Value::Bool(false)), x.clone()]);
        assert_eq!(simplify(&t).unwrap(), x);
    }

    #[test]
    fn arithmetic_rules() {
        let i = leaf(0, 0, DataType::Int);
        let n = leaf(1, 0, DataType::Num);
        assert_eq!(simplify(&app(Func::Add, vec![c(Value::Int(5)), c(Value::Int(0))])).unwrap(), c(Value::Int(5)));
        assert_eq!(simplify(&app(Func::Mul, vec![c(Value::Int(0)), i.clone()])).unwrap(), c(Value::Int(0)));
        assert_eq!(simplify(&app(Func::Add, vec![i.clone(), c(Value::Int(0))])).unwrap(), i);
        assert_eq!(simplify(&app(Func::Mul, vec![c(Value::Int(1)), n.clone()])).unwrap(), n);
        // 0 * x is not 0 for a float x (NaN, infinities, signed zero)
        let t = app(Func::Mul, vec![c(Value::Num(0.0)), n.clone()]);
        assert_eq!(simplify(&t).unwrap(), t);
        // x + 0.0 turns -0.0 into 0.0, so only -0.0 is an identity
        let t = app(Func::Add, vec![n.clone(), c(Value::Num(0.0))]);
        assert_eq!(simplify(&t).unwrap(), t);
        assert_eq!(simplify(&app(Func::Add, vec![n.clone(), c(Value::Num(-0.0))])).unwrap(), n);
        // int + num promotes, so the int operand alone is not equivalent
        let t = app(Func::Add, vec![i, c(Value::Num(-0.0))]);
        assert_eq!(simplify(&t).unwrap(), t);
    }

    #[test]
    fn failing_subterm_stays_symbolic() {
        let div0 = app(Func::Div, vec![c(Value::Int(1)), c(Value::Int(0))]);
        let x = leaf(0, 0, DataType::Bool);
        let t = app(Func::Ite, vec![x.clone(), div0.clone(), c(Value::Int(2))]);
        assert_eq!(simplify(&t).unwrap(), t);
        let picked = substitute(&t, &|_| Some(Value::Bool(false))).unwrap();
        assert_eq!(simplify(&picked).unwrap(), c(Value::Int(2)));
        let picked = substitute(&t, &|_| Some(Value::Bool(true))).unwrap();
        assert_eq!(simplify(&picked), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn strict_mode_waits_for_ground() {
        let t = app(Func::Ite, vec![leaf(0, 0, DataType::Bool), c(Value::Int(0)), leaf(1, 0, DataType::Int)]);
        let only_cond = |v: InstantVar| (v.stream == StreamId(0)).then_some(Value::Bool(true));
        let r = reduce(&t, &only_cond, Simplifier::Strict).unwrap();
        assert!(!r.is_ground());
        assert_eq!(reduce(&t, &only_cond, Simplifier::Full).unwrap(), c(Value::Int(0)));
        let all = |v: InstantVar| Some(if v.stream == StreamId(0) { Value::Bool(true) } else { Value::Int(4) });
        assert_eq!(reduce(&t, &all, Simplifier::Strict).unwrap(), c(Value::Int(0)));
    }
}
