//! Runtime values, data types and the interpreted function symbols.
//!
//! Both evaluation routes (the centralized oracle and the partial evaluator
//! used by the monitors) bottom out in [`Func::apply`], so the arithmetic
//! semantics live in exactly one place.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Bool,
    Int,
    Num,
}

impl DataType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int | DataType::Num)
    }

    /// Whether a value of type `from` may be stored in a stream of type `self`.
    pub fn accepts(self, from: DataType) -> bool {
        self == from || (self.is_numeric() && from.is_numeric())
    }

    pub fn keyword(self) -> &'static str {
        match self {
            DataType::Bool => "bool",
            DataType::Int => "int",
            DataType::Num => "num",
        }
    }

    pub(crate) fn join_numeric(a: DataType, b: DataType) -> DataType {
        if a == DataType::Num || b == DataType::Num {
            DataType::Num
        } else {
            DataType::Int
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A stream value. `num` is a 64-bit float, `int` a checked 64-bit integer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Num(f64),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Bool(_) => DataType::Bool,
            Value::Int(_) => DataType::Int,
            Value::Num(_) => DataType::Num,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Num(x) => Some(x),
            Value::Bool(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            Value::Num(x) => x.is_finite(),
            _ => true,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Value::Int(i) => i == 0,
            Value::Num(x) => x == 0.0,
            Value::Bool(_) => false,
        }
    }

    pub fn is_one(&self) -> bool {
        match *self {
            Value::Int(i) => i == 1,
            Value::Num(x) => x == 1.0,
            Value::Bool(_) => false,
        }
    }

    /// The zero/false value of a type, used where a placeholder is needed.
    pub fn zero(ty: DataType) -> Value {
        match ty {
            DataType::Bool => Value::Bool(false),
            DataType::Int => Value::Int(0),
            DataType::Num => Value::Num(0.0),
        }
    }

    /// Converts a value into the representation of a stream of type `ty`.
    ///
    /// `num` to `int` truncates toward zero; non-finite or out of range
    /// floats are rejected.
    pub fn coerce(self, ty: DataType) -> Result<Value, EvalError> {
        match (self, ty) {
            (Value::Bool(_), DataType::Bool) | (Value::Int(_), DataType::Int) | (Value::Num(_), DataType::Num) => {
                Ok(self)
            }
            (Value::Int(i), DataType::Num) => Ok(Value::Num(i as f64)),
            (Value::Num(x), DataType::Int) => {
                let t = x.trunc();
                if t.is_finite() && t >= i64::MIN as f64 && t < i64::MAX as f64 {
                    Ok(Value::Int(t as i64))
                } else {
                    Err(EvalError::Overflow)
                }
            }
            _ => Err(EvalError::Type(format!("cannot store {self} in a {ty} stream"))),
        }
    }

    /// Value equality used when comparing runs: exact for `bool`/`int`,
    /// absolute tolerance for `num` (NaN equals NaN, infinities must match).
    pub fn approx_eq(&self, other: &Value, tol: f64) -> bool {
        match (*self, *other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Num(a), Value::Num(b)) => {
                if a.is_nan() || b.is_nan() {
                    a.is_nan() && b.is_nan()
                } else if a.is_infinite() || b.is_infinite() {
                    a == b
                } else {
                    (a - b).abs() <= tol
                }
            }
            _ => false,
        }
    }
}

/// Structural equality: floats compare by bit pattern so that terms are
/// `Eq`-like and a printed/re-parsed constant compares equal to itself.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (*self, *other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Num(a), Value::Num(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match *self {
            Value::Bool(b) => (0u8, b).hash(state),
            Value::Int(i) => (1u8, i).hash(state),
            Value::Num(x) => (2u8, x.to_bits()).hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            // `{:?}` always keeps a decimal point or exponent, so the literal
            // re-parses as a `num`.
            Value::Num(x) => write!(f, "{x:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("type error: {0}")]
    Type(String),
}

/// Interpreted function symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Not,
    Ite,
    /// Variadic conjunction `AND(..)`.
    AndN,
    /// Variadic disjunction `OR(..)`.
    OrN,
    Avg,
    Max,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Fixed(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn admits(self, n: usize) -> bool {
        match self {
            Arity::Fixed(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

impl Func {
    pub fn arity(self) -> Arity {
        use Func::*;
        match self {
            Neg | Not => Arity::Fixed(1),
            Add | Sub | Mul | Div | Lt | Le | Gt | Ge | Eq | Ne | And | Or => Arity::Fixed(2),
            Ite => Arity::Fixed(3),
            AndN | OrN | Avg | Max | Sum => Arity::AtLeast(1),
        }
    }

    /// Name of the variadic builtins as written in source.
    pub fn call_name(self) -> Option<&'static str> {
        match self {
            Func::AndN => Some("AND"),
            Func::OrN => Some("OR"),
            Func::Avg => Some("AVG"),
            Func::Max => Some("MAX"),
            Func::Sum => Some("SUM"),
            _ => None,
        }
    }

    pub fn from_call_name(name: &str) -> Option<Func> {
        match name {
            "AND" => Some(Func::AndN),
            "OR" => Some(Func::OrN),
            "AVG" => Some(Func::Avg),
            "MAX" => Some(Func::Max),
            "SUM" => Some(Func::Sum),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        use Func::*;
        match self {
            Add => "+",
            Sub | Neg => "-",
            Mul => "*",
            Div => "/",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            And => "and",
            Or => "or",
            Not => "not",
            Ite => "if",
            AndN => "AND",
            OrN => "OR",
            Avg => "AVG",
            Max => "MAX",
            Sum => "SUM",
        }
    }

    /// Result type for the given argument types, or a description of the
    /// mismatch.
    pub fn result_type(self, args: &[DataType]) -> Result<DataType, String> {
        use Func::*;
        if !self.arity().admits(args.len()) {
            return Err(format!("`{}` applied to {} arguments", self.symbol(), args.len()));
        }
        let all = |ty: DataType| args.iter().all(|a| *a == ty);
        let numeric = || args.iter().all(|a| a.is_numeric());
        match self {
            Add | Sub | Mul | Div | Neg | Max | Sum => {
                if numeric() {
                    Ok(args.iter().copied().fold(DataType::Int, DataType::join_numeric))
                } else {
                    Err(format!("`{}` expects numeric operands", self.symbol()))
                }
            }
            Avg => {
                if numeric() {
                    Ok(DataType::Num)
                } else {
                    Err("`AVG` expects numeric operands".into())
                }
            }
            Lt | Le | Gt | Ge => {
                if numeric() {
                    Ok(DataType::Bool)
                } else {
                    Err(format!("`{}` expects numeric operands", self.symbol()))
                }
            }
            Eq | Ne => {
                if numeric() || all(DataType::Bool) {
                    Ok(DataType::Bool)
                } else {
                    Err(format!("`{}` compares values of different types", self.symbol()))
                }
            }
            And | Or | Not | AndN | OrN => {
                if all(DataType::Bool) {
                    Ok(DataType::Bool)
                } else {
                    Err(format!("`{}` expects bool operands", self.symbol()))
                }
            }
            Ite => {
                if args[0] != DataType::Bool {
                    return Err("`if` condition must be bool".into());
                }
                if args[1] == args[2] {
                    Ok(args[1])
                } else if args[1].is_numeric() && args[2].is_numeric() {
                    Ok(DataType::Num)
                } else {
                    Err("`if` branches have different types".into())
                }
            }
        }
    }

    /// Applies the function to fully evaluated arguments.
    ///
    /// `Ite` is strict here; callers that want the unchosen branch left
    /// unevaluated handle the conditional themselves.
    pub fn apply(self, args: &[Value]) -> Result<Value, EvalError> {
        use Func::*;
        if !self.arity().admits(args.len()) {
            return Err(EvalError::Type(format!("arity mismatch for `{}`", self.symbol())));
        }
        match self {
            Add => arith(args[0], args[1], i64::checked_add, |a, b| a + b),
            Sub => arith(args[0], args[1], i64::checked_sub, |a, b| a - b),
            Mul => arith(args[0], args[1], i64::checked_mul, |a, b| a * b),
            Div => divide(args[0], args[1]),
            Neg => match args[0] {
                Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
                Value::Num(x) => Ok(Value::Num(-x)),
                v => Err(type_err(self, v)),
            },
            Lt | Le | Gt | Ge => {
                let ord = compare(args[0], args[1])?;
                let r = match ord {
                    None => false,
                    Some(o) => match self {
                        Lt => o.is_lt(),
                        Le => o.is_le(),
                        Gt => o.is_gt(),
                        _ => o.is_ge(),
                    },
                };
                Ok(Value::Bool(r))
            }
            Eq | Ne => {
                let eq = match (args[0], args[1]) {
                    (Value::Bool(a), Value::Bool(b)) => a == b,
                    (a, b) => compare(a, b)?.is_some_and(|o| o.is_eq()),
                };
                Ok(Value::Bool(if self == Eq { eq } else { !eq }))
            }
            And => Ok(Value::Bool(bool_arg(self, args[0])? && bool_arg(self, args[1])?)),
            Or => Ok(Value::Bool(bool_arg(self, args[0])? || bool_arg(self, args[1])?)),
            Not => Ok(Value::Bool(!bool_arg(self, args[0])?)),
            AndN => {
                let mut acc = true;
                for a in args {
                    acc &= bool_arg(self, *a)?;
                }
                Ok(Value::Bool(acc))
            }
            OrN => {
                let mut acc = false;
                for a in args {
                    acc |= bool_arg(self, *a)?;
                }
                Ok(Value::Bool(acc))
            }
            Ite => {
                let branch = if bool_arg(self, args[0])? { args[1] } else { args[2] };
                match (args[1].data_type(), args[2].data_type()) {
                    (a, b) if a != b && a.is_numeric() && b.is_numeric() => branch.coerce(DataType::Num),
                    _ => Ok(branch),
                }
            }
            Sum => {
                let mut acc = args[0];
                for a in &args[1..] {
                    acc = arith(acc, *a, i64::checked_add, |x, y| x + y)?;
                }
                Ok(acc)
            }
            Max => {
                let mut best = args[0];
                for a in &args[1..] {
                    match compare(best, *a)? {
                        Some(o) if o.is_lt() => best = *a,
                        None if a.as_f64().is_some_and(f64::is_nan) => best = *a,
                        _ => {}
                    }
                }
                if args.iter().any(|a| a.data_type() == DataType::Num) {
                    best.coerce(DataType::Num)
                } else {
                    Ok(best)
                }
            }
            Avg => {
                let mut sum = 0.0;
                for a in args {
                    sum += a.as_f64().ok_or_else(|| type_err(self, *a))?;
                }
                Ok(Value::Num(sum / args.len() as f64))
            }
        }
    }
}

fn type_err(f: Func, v: Value) -> EvalError {
    EvalError::Type(format!("`{}` applied to {}", f.symbol(), v))
}

fn bool_arg(f: Func, v: Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| type_err(f, v))
}

fn arith(
    a: Value,
    b: Value,
    int_op: fn(i64, i64) -> Option<i64>,
    num_op: fn(f64, f64) -> f64,
) -> Result<Value, EvalError> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => int_op(x, y).map(Value::Int).ok_or(EvalError::Overflow),
        _ => {
            let x = a.as_f64().ok_or_else(|| EvalError::Type(format!("arithmetic on {a}")))?;
            let y = b.as_f64().ok_or_else(|| EvalError::Type(format!("arithmetic on {b}")))?;
            Ok(Value::Num(num_op(x, y)))
        }
    }
}

fn divide(a: Value, b: Value) -> Result<Value, EvalError> {
    match (a, b) {
        (Value::Int(_), Value::Int(0)) => Err(EvalError::DivisionByZero),
        (Value::Int(x), Value::Int(y)) => x.checked_div(y).map(Value::Int).ok_or(EvalError::Overflow),
        _ => {
            let x = a.as_f64().ok_or_else(|| EvalError::Type(format!("arithmetic on {a}")))?;
            let y = b.as_f64().ok_or_else(|| EvalError::Type(format!("arithmetic on {b}")))?;
            if y == 0.0 {
                Err(EvalError::DivisionByZero)
            } else {
                Ok(Value::Num(x / y))
            }
        }
    }
}

fn compare(a: Value, b: Value) -> Result<Option<std::cmp::Ordering>, EvalError> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(Some(x.cmp(&y))),
        _ => {
            let x = a.as_f64().ok_or_else(|| EvalError::Type(format!("comparison on {a}")))?;
            let y = b.as_f64().ok_or_else(|| EvalError::Type(format!("comparison on {b}")))?;
            Ok(x.partial_cmp(&y))
        }
    }
}
