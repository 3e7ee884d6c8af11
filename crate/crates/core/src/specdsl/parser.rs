use std::collections::HashMap;

use super::lexer::{tokenize, Tok, Token};
use super::{Comm, DiagKind, Diagnostic, NodeId, Pos, SpecError, Specification, StreamKind, StreamVar, Term};
use crate::value::{DataType, Func, Value};

const KEYWORDS: &[&str] = &[
    "input", "define", "output", "const", "eval", "lazy", "bool", "int", "num", "if", "then", "else", "and", "or",
    "not", "true", "false", "AND", "OR", "AVG", "MAX", "SUM",
];

/// Parses a specification, resolving names and offset defaults.
///
/// Equation types are checked separately by [`super::typecheck`].
pub fn parse(source: &str) -> Result<Specification, SpecError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { toks: tokens, at: 0, refs: Vec::new() };
    let decls = p.spec()?;
    resolve(decls)
}

struct Decl {
    kind: StreamKind,
    dtype: DataType,
    name: String,
    comm: Comm,
    node: NodeId,
    pos: Pos,
    body: Option<Term>,
    literal: Option<(Value, Pos)>,
    refs: Vec<(String, Pos)>,
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    refs: Vec<(String, Pos)>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        Err(Diagnostic::new(
            self.pos(),
            DiagKind::Syntax,
            format!("expected {wanted}, found {}", self.peek().describe()),
        ))
    }

    fn expect(&mut self, t: Tok, wanted: &str) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.unexpected(wanted)
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn spec(&mut self) -> PResult<Vec<Decl>> {
        let mut decls = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::At => {
                    self.advance();
                    let node = match self.advance().tok {
                        Tok::Ident(s) => NodeId(s),
                        Tok::Int(i) => NodeId(i.to_string()),
                        _ => {
                            self.at -= 1;
                            return self.unexpected("a node identifier after `@`");
                        }
                    };
                    self.expect(Tok::LBrace, "`{`")?;
                    while !self.eat(&Tok::RBrace) {
                        if *self.peek() == Tok::Eof {
                            return self.unexpected("`}`");
                        }
                        decls.push(self.decl(node.clone())?);
                    }
                }
                Tok::Ident(s) if ["input", "define", "output", "const"].contains(&s.as_str()) => {
                    let pos = self.pos();
                    self.advance();
                    self.advance();
                    let name = match self.peek() {
                        Tok::Ident(n) => n.clone(),
                        other => other.describe(),
                    };
                    return Err(Diagnostic::new(
                        pos,
                        DiagKind::Placement,
                        format!("stream `{name}` declared outside any `@node{{...}}` block"),
                    ));
                }
                _ => return self.unexpected("`@node{` block"),
            }
        }
        Ok(decls)
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok((s, pos))
            }
            _ => self.unexpected(what),
        }
    }

    fn dtype(&mut self) -> PResult<DataType> {
        for (kw, ty) in [("bool", DataType::Bool), ("int", DataType::Int), ("num", DataType::Num)] {
            if self.eat_kw(kw) {
                return Ok(ty);
            }
        }
        self.unexpected("a type (`bool`, `int` or `num`)")
    }

    fn comm(&mut self) -> Comm {
        if self.eat_kw("lazy") {
            Comm::Lazy
        } else {
            self.eat_kw("eval");
            Comm::Eager
        }
    }

    fn decl(&mut self, node: NodeId) -> PResult<Decl> {
        let pos = self.pos();
        let kind = if self.eat_kw("input") {
            StreamKind::Input
        } else if self.eat_kw("define") {
            StreamKind::Define
        } else if self.eat_kw("output") {
            StreamKind::Output
        } else if self.eat_kw("const") {
            StreamKind::Const
        } else {
            return self.unexpected("a declaration (`input`, `define`, `output` or `const`)");
        };
        let dtype = self.dtype()?;
        let (name, _) = self.ident("a stream name")?;
        let mut decl =
            Decl { kind, dtype, name, comm: Comm::Eager, node, pos, body: None, literal: None, refs: Vec::new() };
        match kind {
            StreamKind::Input => decl.comm = self.comm(),
            StreamKind::Const => {
                self.expect(Tok::Assign, "`=`")?;
                let lpos = self.pos();
                decl.literal = Some((self.literal()?, lpos));
            }
            StreamKind::Define | StreamKind::Output => {
                decl.comm = self.comm();
                self.expect(Tok::Assign, "`=`")?;
                self.refs.clear();
                decl.body = Some(self.expr()?);
                decl.refs = std::mem::take(&mut self.refs);
            }
        }
        Ok(decl)
    }

    fn literal(&mut self) -> PResult<Value> {
        let neg = self.eat(&Tok::Minus);
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                int_literal(i, neg, pos)
            }
            Tok::Num(x) => {
                self.advance();
                Ok(Value::Num(if neg { -x } else { x }))
            }
            Tok::Ident(s) if !neg && (s == "true" || s == "false") => {
                self.advance();
                Ok(Value::Bool(s == "true"))
            }
            _ => self.unexpected("a literal"),
        }
    }

    fn expr(&mut self) -> PResult<Term> {
        if self.eat_kw("if") {
            let c = self.expr()?;
            self.expect_kw("then")?;
            let a = self.expr()?;
            self.expect_kw("else")?;
            let b = self.expr()?;
            return Ok(Term::Apply(Func::Ite, vec![c, a, b]));
        }
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Term> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            let rhs = self.and_expr()?;
            lhs = Term::Apply(Func::Or, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Term> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            let rhs = self.not_expr()?;
            lhs = Term::Apply(Func::And, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Term> {
        if self.eat_kw("not") {
            let t = self.not_expr()?;
            return Ok(Term::Apply(Func::Not, vec![t]));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Term> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Lt => Func::Lt,
            Tok::Le => Func::Le,
            Tok::Gt => Func::Gt,
            Tok::Ge => Func::Ge,
            Tok::EqEq => Func::Eq,
            Tok::Ne => Func::Ne,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.add_expr()?;
        Ok(Term::Apply(op, vec![lhs, rhs]))
    }

    fn add_expr(&mut self) -> PResult<Term> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Func::Add,
                Tok::Minus => Func::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul_expr()?;
            lhs = Term::Apply(op, vec![lhs, rhs]);
        }
    }

    fn mul_expr(&mut self) -> PResult<Term> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => Func::Mul,
                Tok::Slash => Func::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Term::Apply(op, vec![lhs, rhs]);
        }
    }

    fn unary(&mut self) -> PResult<Term> {
        if *self.peek() == Tok::Minus {
            self.advance();
            let pos = self.pos();
            // A minus directly in front of a numeric literal is part of it.
            return match self.peek().clone() {
                Tok::Int(i) => {
                    self.advance();
                    Ok(Term::Const(int_literal(i, true, pos)?))
                }
                Tok::Num(x) => {
                    self.advance();
                    Ok(Term::Const(Value::Num(-x)))
                }
                _ => Ok(Term::Apply(Func::Neg, vec![self.unary()?])),
            };
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Term> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                Ok(Term::Const(int_literal(i, false, pos)?))
            }
            Tok::Num(x) => {
                self.advance();
                Ok(Term::Const(Value::Num(x)))
            }
            Tok::LParen => {
                self.advance();
                let t = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.advance();
                Ok(Term::Const(Value::Bool(s == "true")))
            }
            Tok::Ident(s) if s == "if" => self.expr(),
            Tok::Ident(s) if Func::from_call_name(&s).is_some() => {
                let f = Func::from_call_name(&s).expect("checked");
                self.advance();
                self.expect(Tok::LParen, "`(`")?;
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    args.push(self.expr()?);
                    while self.eat(&Tok::Comma) {
                        args.push(self.expr()?);
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                if !f.arity().admits(args.len()) {
                    return Err(Diagnostic::new(
                        pos,
                        DiagKind::ArityMismatch,
                        format!("`{s}` needs at least one argument"),
                    ));
                }
                Ok(Term::Apply(f, args))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                self.refs.push((s.clone(), pos));
                if self.eat(&Tok::LBrack) {
                    let neg = if self.eat(&Tok::Minus) {
                        true
                    } else {
                        self.eat(&Tok::Plus);
                        false
                    };
                    let opos = self.pos();
                    let offset = match self.peek().clone() {
                        Tok::Int(i) => {
                            self.advance();
                            match int_literal(i, neg, opos)? {
                                Value::Int(v) => v,
                                _ => unreachable!(),
                            }
                        }
                        _ => return self.unexpected("an integer offset"),
                    };
                    self.expect(Tok::Pipe, "`|`")?;
                    let default = self.literal()?;
                    self.expect(Tok::RBrack, "`]`")?;
                    Ok(Term::Offset { stream: s, offset, default })
                } else {
                    Ok(Term::Var(s))
                }
            }
            _ => self.unexpected("an expression"),
        }
    }
}

fn int_literal(i: u128, neg: bool, pos: Pos) -> PResult<Value> {
    let v = if neg { -(i as i128) } else { i as i128 };
    i64::try_from(v)
        .map(Value::Int)
        .map_err(|_| Diagnostic::new(pos, DiagKind::Lexical, "integer literal out of range"))
}

fn resolve(decls: Vec<Decl>) -> Result<Specification, SpecError> {
    let mut diags = Vec::new();
    if decls.is_empty() {
        diags.push(Diagnostic::new(Pos { line: 1, col: 1 }, DiagKind::Empty, "no streams declared"));
        return Err(SpecError { diagnostics: diags });
    }

    let mut declared: HashMap<String, (DataType, StreamKind, Pos)> = HashMap::new();
    for d in &decls {
        if let Some((_, _, first)) = declared.get(&d.name) {
            diags.push(Diagnostic::new(
                d.pos,
                DiagKind::DuplicateDeclaration,
                format!("`{}` is already declared at {first}", d.name),
            ));
        } else {
            declared.insert(d.name.clone(), (d.dtype, d.kind, d.pos));
        }
    }

    let mut spec = Specification::default();
    for mut d in decls {
        if spec.decl_pos.contains_key(&d.name) {
            continue;
        }
        spec.decl_pos.insert(d.name.clone(), d.pos);
        if let Some((lit, lpos)) = d.literal {
            match lit.coerce(d.dtype) {
                Ok(v) if d.dtype.accepts(lit.data_type()) && lossless(lit, v) => {
                    spec.constants.insert(d.name.clone(), v);
                }
                _ => diags.push(Diagnostic::new(
                    lpos,
                    DiagKind::TypeMismatch,
                    format!("constant `{}` of type {} initialised with {lit}", d.name, d.dtype),
                )),
            }
        }
        if let Some(body) = d.body.as_mut() {
            let mut sites = d.refs.iter();
            fix_refs(body, &mut sites, &declared, &mut diags);
        }
        spec.nodes.insert(d.node.clone());
        spec.streams.push(StreamVar { name: d.name.clone(), kind: d.kind, dtype: d.dtype, node: d.node, comm: d.comm });
        if let Some(body) = d.body {
            spec.equations.insert(d.name, body);
        }
    }

    if !diags.is_empty() {
        diags.sort_by_key(|d| d.pos);
        return Err(SpecError { diagnostics: diags });
    }
    spec.streams.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(spec)
}

/// A literal fits a declared type if converting it loses nothing.
fn lossless(lit: Value, stored: Value) -> bool {
    !matches!((lit, stored), (Value::Num(_), Value::Int(_)))
}

fn fix_refs<'a>(
    t: &mut Term,
    sites: &mut impl Iterator<Item = &'a (String, Pos)>,
    declared: &HashMap<String, (DataType, StreamKind, Pos)>,
    diags: &mut Vec<Diagnostic>,
) {
    match t {
        Term::Const(_) => {}
        Term::Apply(_, args) => args.iter_mut().for_each(|a| fix_refs(a, sites, declared, diags)),
        Term::Var(name) => {
            let pos = sites.next().map(|s| s.1).unwrap_or_default();
            if !declared.contains_key(name.as_str()) {
                diags.push(Diagnostic::new(pos, DiagKind::UnknownIdentifier, format!("unknown stream `{name}`")));
            }
        }
        Term::Offset { stream, default, .. } => {
            let pos = sites.next().map(|s| s.1).unwrap_or_default();
            match declared.get(stream.as_str()) {
                None => {
                    diags.push(Diagnostic::new(pos, DiagKind::UnknownIdentifier, format!("unknown stream `{stream}`")))
                }
                Some((_, StreamKind::Const, _)) => diags.push(Diagnostic::new(
                    pos,
                    DiagKind::TypeMismatch,
                    format!("constant `{stream}` cannot be read at an offset"),
                )),
                Some((ty, _, _)) => match default.coerce(*ty) {
                    Ok(v) if lossless(*default, v) => *default = v,
                    _ => diags.push(Diagnostic::new(
                        pos,
                        DiagKind::TypeMismatch,
                        format!("default {default} does not match the type {ty} of `{stream}`"),
                    )),
                },
            }
        }
    }
}
