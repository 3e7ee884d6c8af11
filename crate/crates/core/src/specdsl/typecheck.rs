use super::{DiagKind, Diagnostic, Specification, StreamKind, Term};
use crate::value::DataType;

/// Checks every equation against the type of its stream.
///
/// `int` and `num` are mutually assignable; storing a `num` into an `int`
/// stream truncates toward zero at evaluation time.
pub fn typecheck(spec: &Specification) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for s in &spec.streams {
        if matches!(s.kind, StreamKind::Input | StreamKind::Const) {
            continue;
        }
        let pos = spec.position_of(&s.name);
        let Some(eq) = spec.equations.get(&s.name) else {
            diags.push(Diagnostic::new(pos, DiagKind::Syntax, format!("`{}` has no defining equation", s.name)));
            continue;
        };
        match term_type(spec, eq) {
            Ok(ty) if s.dtype.accepts(ty) => {}
            Ok(ty) => diags.push(Diagnostic::new(
                pos,
                DiagKind::TypeMismatch,
                format!("`{}` is declared {} but its equation has type {ty}", s.name, s.dtype),
            )),
            Err(msg) => diags.push(Diagnostic::new(pos, DiagKind::TypeMismatch, format!("in `{}`: {msg}", s.name))),
        }
    }
    diags
}

/// Type of a term, or the first mismatch found in it.
pub fn term_type(spec: &Specification, t: &Term) -> Result<DataType, String> {
    match t {
        Term::Const(v) => Ok(v.data_type()),
        Term::Var(n) | Term::Offset { stream: n, .. } => {
            spec.stream(n).map(|s| s.dtype).ok_or_else(|| format!("unknown stream `{n}`"))
        }
        Term::Apply(f, args) => {
            let tys = args.iter().map(|a| term_type(spec, a)).collect::<Result<Vec<_>, _>>()?;
            f.result_type(&tys)
        }
    }
}
