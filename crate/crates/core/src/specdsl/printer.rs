use std::fmt::Write;

use super::{Specification, StreamKind, Term};
use crate::value::{Func, Value};

/// Canonical text form: blocks sorted by node id, one declaration per line.
pub fn print(spec: &Specification) -> String {
    let mut out = String::new();
    for node in &spec.nodes {
        let _ = writeln!(out, "@{node} {{");
        let mut local: Vec<_> = spec.streams.iter().filter(|s| &s.node == node).collect();
        local.sort_by_key(|s| (s.kind != StreamKind::Const, s.kind != StreamKind::Input, s.name.clone()));
        for s in local {
            let _ = match s.kind {
                StreamKind::Const => {
                    let v = spec.constants.get(&s.name).copied().unwrap_or(Value::zero(s.dtype));
                    writeln!(out, "  const {} {} = {}", s.dtype, s.name, v)
                }
                StreamKind::Input => writeln!(out, "  input {} {}{}", s.dtype, s.name, comm_suffix(s.comm)),
                kind => {
                    let body = spec.equations.get(&s.name).map(print_term).unwrap_or_default();
                    writeln!(out, "  {} {} {}{} = {}", kind.keyword(), s.dtype, s.name, comm_suffix(s.comm), body)
                }
            };
        }
        out.push_str("}\n");
    }
    out
}

fn comm_suffix(c: super::Comm) -> &'static str {
    match c {
        super::Comm::Eager => "",
        super::Comm::Lazy => " lazy",
    }
}

pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    emit(t, 0, &mut s);
    s
}

fn prec(t: &Term) -> u8 {
    match t {
        Term::Apply(f, _) => match f {
            Func::Ite => 0,
            Func::Or => 1,
            Func::And => 2,
            Func::Not => 3,
            Func::Lt | Func::Le | Func::Gt | Func::Ge | Func::Eq | Func::Ne => 4,
            Func::Add | Func::Sub => 5,
            Func::Mul | Func::Div => 6,
            Func::Neg => 7,
            _ => 8,
        },
        _ => 8,
    }
}

fn emit(t: &Term, min: u8, out: &mut String) {
    let p = prec(t);
    if p < min {
        out.push('(');
        emit(t, 0, out);
        out.push(')');
        return;
    }
    match t {
        Term::Const(v) => {
            let _ = write!(out, "{v}");
        }
        Term::Var(n) => out.push_str(n),
        Term::Offset { stream, offset, default } => {
            let _ = write!(out, "{stream}[{offset}|{default}]");
        }
        Term::Apply(f, args) => match f {
            Func::Ite => {
                out.push_str("if ");
                emit(&args[0], 0, out);
                out.push_str(" then ");
                emit(&args[1], 0, out);
                out.push_str(" else ");
                emit(&args[2], 0, out);
            }
            Func::Not => {
                out.push_str("not ");
                emit(&args[0], 3, out);
            }
            Func::Neg => {
                out.push('-');
                // `-3` would read back as a literal, so keep operand parens.
                let min = if matches!(args[0], Term::Const(_)) { 9 } else { 7 };
                emit(&args[0], min, out);
            }
            _ if f.call_name().is_some() => {
                out.push_str(f.call_name().unwrap_or_default());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    emit(a, 0, out);
                }
                out.push(')');
            }
            _ => {
                let (l, r) = match p {
                    4 => (5, 5),
                    _ => (p, p + 1),
                };
                emit(&args[0], l, out);
                let _ = write!(out, " {} ", f.symbol());
                emit(&args[1], r, out);
            }
        },
    }
}
