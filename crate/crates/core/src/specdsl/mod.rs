//! The specification language: an annotated Lola dialect.
//!
//! ```text
//! @1 {
//!   input num y
//!   input bool reset
//! }
//! @2 {
//!   define int acc = y + root[-1|0]
//!   output int root lazy = if reset then 0 else acc
//! }
//! ```
//!
//! Every declaration lives in an `@node{...}` block, which fixes the node
//! that computes the stream. Streams are eager unless marked `lazy`
//! (`eval` spells out the default). Comments run from `//` or `#` to the
//! end of the line.

mod lexer;
mod parser;
mod printer;
mod typecheck;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{DataType, Func, Value};

pub use parser::parse;
pub use printer::{print, print_term};
pub use typecheck::{term_type, typecheck};

/// Parses and typechecks in one go.
pub fn load(source: &str) -> Result<Specification, SpecError> {
    let spec = parse(source)?;
    let diags = typecheck(&spec);
    if diags.is_empty() {
        Ok(spec)
    } else {
        Err(SpecError { diagnostics: diags })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagKind {
    Lexical,
    Syntax,
    UnknownIdentifier,
    DuplicateDeclaration,
    TypeMismatch,
    ArityMismatch,
    Placement,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub pos: Pos,
    pub kind: DiagKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(pos: Pos, kind: DiagKind, message: impl Into<String>) -> Self {
        Diagnostic { pos, kind, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

/// A rejected specification. Always carries at least one diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SpecError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl From<Diagnostic> for SpecError {
    fn from(d: Diagnostic) -> Self {
        SpecError { diagnostics: vec![d] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Input,
    Define,
    Output,
    Const,
}

impl StreamKind {
    pub fn keyword(self) -> &'static str {
        match self {
            StreamKind::Input => "input",
            StreamKind::Define => "define",
            StreamKind::Output => "output",
            StreamKind::Const => "const",
        }
    }
}

/// Communication strategy of a stream's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comm {
    #[default]
    Eager,
    Lazy,
}

/// Node identifier as written after `@`. Purely numeric ids order
/// numerically, everything else lexicographically after them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<&str> {
        if !self.0.is_empty() && self.0.bytes().all(|b| b.is_ascii_digit()) {
            Some(self.0.trim_start_matches('0'))
        } else {
            None
        }
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamVar {
    pub name: String,
    pub kind: StreamKind,
    pub dtype: DataType,
    pub node: NodeId,
    pub comm: Comm,
}

/// Stream expression over names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Value),
    Var(String),
    Offset { stream: String, offset: i64, default: Value },
    Apply(Func, Vec<Term>),
}

impl Term {
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Var(_) | Term::Offset { .. } => false,
            Term::Apply(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Calls `f(name, offset)` for every stream reference; bare variables
    /// report offset 0 and `None` as default.
    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(&'a str, i64, Option<Value>)) {
        match self {
            Term::Const(_) => {}
            Term::Var(n) => f(n, 0, None),
            Term::Offset { stream, offset, default } => f(stream, *offset, Some(*default)),
            Term::Apply(_, args) => args.iter().for_each(|a| a.visit_refs(f)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Apply(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            _ => 1,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_term(self))
    }
}

/// A parsed specification. Streams are kept sorted by name; constants are
/// listed in `streams` (kind `const`) and their values in `constants`.
#[derive(Debug, Clone, Default)]
pub struct Specification {
    pub streams: Vec<StreamVar>,
    pub equations: BTreeMap<String, Term>,
    pub constants: BTreeMap<String, Value>,
    pub nodes: BTreeSet<NodeId>,
    pub(crate) decl_pos: HashMap<String, Pos>,
}

impl PartialEq for Specification {
    fn eq(&self, other: &Self) -> bool {
        self.streams == other.streams
            && self.equations == other.equations
            && self.constants == other.constants
            && self.nodes == other.nodes
    }
}

impl Specification {
    pub fn stream(&self, name: &str) -> Option<&StreamVar> {
        self.streams.binary_search_by(|s| s.name.as_str().cmp(name)).ok().map(|i| &self.streams[i])
    }

    pub fn inputs(&self) -> impl Iterator<Item = &StreamVar> {
        self.streams.iter().filter(|s| s.kind == StreamKind::Input)
    }

    /// Input, define and output streams (everything that has a value per tick).
    pub fn signals(&self) -> impl Iterator<Item = &StreamVar> {
        self.streams.iter().filter(|s| s.kind != StreamKind::Const)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &StreamVar> {
        self.streams.iter().filter(|s| s.kind == StreamKind::Output)
    }

    pub fn position_of(&self, name: &str) -> Pos {
        self.decl_pos.get(name).copied().unwrap_or_default()
    }

    /// Returns a copy with every stream on `node`.
    pub fn colocated(&self, node: NodeId) -> Specification {
        let mut s = self.clone();
        for v in &mut s.streams {
            v.node = node.clone();
        }
        s.nodes = BTreeSet::from([node]);
        s
    }

    /// Returns a copy with every non-const stream's strategy set to `comm`.
    pub fn with_comm(&self, comm: Comm) -> Specification {
        let mut s = self.clone();
        for v in &mut s.streams {
            if v.kind != StreamKind::Const {
                v.comm = comm;
            }
        }
        s
    }

    /// Builds a specification from parts, validating it exactly like `parse`.
    pub fn from_parts(
        streams: Vec<StreamVar>,
        equations: BTreeMap<String, Term>,
        constants: BTreeMap<String, Value>,
    ) -> Result<Specification, SpecError> {
        // Going through the printer keeps a single validation path.
        let mut draft = Specification { streams, equations, constants, ..Default::default() };
        draft.streams.sort_by(|a, b| a.name.cmp(&b.name));
        draft.nodes = draft.streams.iter().map(|s| s.node.clone()).collect();
        parse(&print(&draft))
    }
}
