//! Seeded random specifications, placements, input traces, delay models
//! and instantiated terms, for randomized testing and benchmarks.
//!
//! Generated specifications are always well-formed and type-correct, and
//! their arithmetic is kept bounded (multiplication and division only by
//! small constants or of raw inputs) so that evaluation errors stay rare.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::graphs::{check_well_formed, DependencyGraph};
use crate::netsim::{DelayKind, DelayModel};
use crate::oracle::Valuation;
use crate::program::{Program, StreamId};
use crate::specdsl::{typecheck, Comm, NodeId, Specification, StreamKind, StreamVar, Term};
use crate::terms::{ITerm, InstantVar, Leaf};
use crate::value::{DataType, Func, Value};

#[derive(Debug, Clone, Copy)]
pub struct SpecShape {
    /// Total streams, inputs included.
    pub max_streams: usize,
    pub min_offset: i64,
    pub max_offset: i64,
    pub max_depth: usize,
}

impl Default for SpecShape {
    fn default() -> Self {
        SpecShape { max_streams: 6, min_offset: -3, max_offset: 2, max_depth: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommMix {
    Eager,
    Lazy,
    /// Each stream picks independently.
    Mixed,
}

const TYPES: [DataType; 3] = [DataType::Bool, DataType::Int, DataType::Num];

fn random_const<R: Rng + ?Sized>(rng: &mut R, ty: DataType) -> Value {
    match ty {
        DataType::Bool => Value::Bool(rng.random_bool(0.5)),
        DataType::Int => Value::Int(rng.random_range(-3..=5)),
        DataType::Num => Value::Num(f64::from(rng.random_range(-8i32..=8)) / 2.0),
    }
}

struct TermGen<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    streams: &'a [(String, DataType, bool)],
    /// Position of the stream being defined; offset-0 reads only go to
    /// earlier positions so most drafts are already well-formed.
    me: usize,
    shape: SpecShape,
}

impl<R: Rng + ?Sized> TermGen<'_, R> {
    fn reference(&mut self, ty: DataType, inputs_only: bool) -> Option<Term> {
        let fits = |t: DataType| if ty == DataType::Bool { t == DataType::Bool } else { t.is_numeric() };
        let cands: Vec<usize> = (0..self.streams.len())
            .filter(|&i| fits(self.streams[i].1) && (!inputs_only || self.streams[i].2))
            .collect();
        let &i = cands.choose(self.rng)?;
        let (name, sty, _) = &self.streams[i];
        let mut offset = self.rng.random_range(self.shape.min_offset..=self.shape.max_offset);
        if offset == 0 && i >= self.me {
            offset = -1;
        }
        Some(if offset == 0 {
            Term::Var(name.clone())
        } else {
            Term::Offset { stream: name.clone(), offset, default: random_const(self.rng, *sty) }
        })
    }

    fn leaf(&mut self, ty: DataType) -> Term {
        if self.rng.random_bool(0.75) {
            if let Some(t) = self.reference(ty, false) {
                return t;
            }
        }
        Term::Const(random_const(self.rng, ty))
    }

    fn numeric(&mut self) -> DataType {
        if self.rng.random_bool(0.5) {
            DataType::Int
        } else {
            DataType::Num
        }
    }

    fn term(&mut self, ty: DataType, depth: usize) -> Term {
        if depth == 0 || self.rng.random_bool(0.25) {
            return self.leaf(ty);
        }
        let d = depth - 1;
        match ty {
            DataType::Bool => match self.rng.random_range(0..6) {
                0 => Term::Apply(Func::Not, vec![self.term(ty, d)]),
                1 => {
                    let f = *[Func::And, Func::Or].choose(self.rng).expect("nonempty");
                    Term::Apply(f, vec![self.term(ty, d), self.term(ty, d)])
                }
                2 => {
                    let f = *[Func::AndN, Func::OrN].choose(self.rng).expect("nonempty");
                    let n = self.rng.random_range(1..=3);
                    Term::Apply(f, (0..n).map(|_| self.term(ty, d)).collect())
                }
                3 => self.ite(ty, d),
                _ => {
                    let f = *[Func::Lt, Func::Le, Func::Gt, Func::Ge, Func::Eq, Func::Ne]
                        .choose(self.rng)
                        .expect("nonempty");
                    let (a, b) = (self.numeric(), self.numeric());
                    Term::Apply(f, vec![self.term(a, d), self.term(b, d)])
                }
            },
            _ => match self.rng.random_range(0..7) {
                0 | 1 => {
                    let f = *[Func::Add, Func::Sub].choose(self.rng).expect("nonempty");
                    Term::Apply(f, vec![self.term(ty, d), self.term(ty, d)])
                }
                2 => Term::Apply(Func::Neg, vec![self.term(ty, d)]),
                3 => {
                    let f = *[Func::Max, Func::Avg, Func::Sum].choose(self.rng).expect("nonempty");
                    let n = self.rng.random_range(1..=3);
                    let args = (0..n).map(|_| self.term(ty, d)).collect();
                    // AVG of ints is num; keep the target type.
                    if f == Func::Avg && ty == DataType::Int {
                        Term::Apply(Func::Max, args)
                    } else {
                        Term::Apply(f, args)
                    }
                }
                4 => self.ite(ty, d),
                5 => {
                    let c = Term::Const(random_const(self.rng, ty));
                    let x = self.reference(ty, true).unwrap_or_else(|| Term::Const(random_const(self.rng, ty)));
                    Term::Apply(Func::Mul, vec![c, x])
                }
                _ => {
                    let mut c = random_const(self.rng, ty);
                    if c.is_zero() {
                        c = Value::Int(2).coerce(ty).expect("numeric");
                    }
                    Term::Apply(Func::Div, vec![self.term(ty, d), Term::Const(c)])
                }
            },
        }
    }

    fn ite(&mut self, ty: DataType, d: usize) -> Term {
        Term::Apply(Func::Ite, vec![self.term(DataType::Bool, d), self.term(ty, d), self.term(ty, d)])
    }
}

/// A random well-formed, type-correct specification on a single node `0`.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, shape: &SpecShape) -> Specification {
    loop {
        let total = rng.random_range(2..=shape.max_streams.max(2));
        let inputs = rng.random_range(1..total);
        let mut table: Vec<(String, DataType, bool)> = Vec::new();
        for i in 0..total {
            let is_input = i < inputs;
            let name = if is_input { format!("i{i}") } else { format!("s{}", i - inputs) };
            table.push((name, *TYPES.choose(rng).expect("nonempty"), is_input));
        }
        let mut streams = Vec::new();
        let mut equations = BTreeMap::new();
        for (i, (name, ty, is_input)) in table.iter().enumerate() {
            let kind = if *is_input {
                StreamKind::Input
            } else if i + 1 == total {
                StreamKind::Output
            } else {
                *[StreamKind::Define, StreamKind::Output].choose(rng).expect("nonempty")
            };
            streams.push(StreamVar {
                name: name.clone(),
                kind,
                dtype: *ty,
                node: NodeId::from("0"),
                comm: Comm::Eager,
            });
            if !is_input {
                let mut g = TermGen { rng: &mut *rng, streams: &table, me: i, shape: *shape };
                let t = g.term(*ty, shape.max_depth);
                equations.insert(name.clone(), t);
            }
        }
        let Ok(spec) = Specification::from_parts(streams, equations, BTreeMap::new()) else { continue };
        if !typecheck(&spec).is_empty() {
            continue;
        }
        if check_well_formed(&DependencyGraph::from_program(&Program::new(&spec))).well_formed {
            return spec;
        }
    }
}

/// Spreads the streams over `nodes` nodes named `0`, `1`, ...
pub fn random_placement<R: Rng + ?Sized>(rng: &mut R, spec: &Specification, nodes: usize) -> Specification {
    rebuild(spec, |_| NodeId::from(rng.random_range(0..nodes.max(1)).to_string()), |v| v.comm)
}

/// Assigns communication strategies.
pub fn random_comm<R: Rng + ?Sized>(rng: &mut R, spec: &Specification, mix: CommMix) -> Specification {
    rebuild(
        spec,
        |v| v.node.clone(),
        |_| match mix {
            CommMix::Eager => Comm::Eager,
            CommMix::Lazy => Comm::Lazy,
            CommMix::Mixed => {
                if rng.random_bool(0.5) {
                    Comm::Eager
                } else {
                    Comm::Lazy
                }
            }
        },
    )
}

fn rebuild(
    spec: &Specification,
    mut node: impl FnMut(&StreamVar) -> NodeId,
    mut comm: impl FnMut(&StreamVar) -> Comm,
) -> Specification {
    let streams = spec
        .streams
        .iter()
        .map(|v| {
            let mut v = v.clone();
            if v.kind != StreamKind::Const {
                v.node = node(&v);
                v.comm = comm(&v);
            }
            v
        })
        .collect();
    Specification::from_parts(streams, spec.equations.clone(), spec.constants.clone())
        .expect("re-placing a valid specification keeps it valid")
}

/// Uniformly random values for every input stream.
pub fn random_inputs<R: Rng + ?Sized>(rng: &mut R, spec: &Specification, len: u64) -> Valuation {
    let mut v = Valuation::new(len);
    for s in spec.inputs() {
        let col = (0..len).map(|_| random_const(rng, s.dtype)).collect();
        v.insert(s.name.clone(), col);
    }
    v
}

/// One of the four delay families with small random parameters.
pub fn random_delay_kind<R: Rng + ?Sized>(rng: &mut R, horizon: u64) -> DelayKind {
    let family = rng.random_range(0..4);
    delay_kind_of(rng, family, horizon)
}

/// Family `0` constant, `1` constant with a peak, `2` normal, `3` normal
/// with a peak (taken modulo 4), with random parameters.
pub fn delay_kind_of<R: Rng + ?Sized>(rng: &mut R, family: usize, horizon: u64) -> DelayKind {
    let peak_start = rng.random_range(0..horizon.max(1));
    let peak_height = rng.random_range(1..=8);
    let recovery_slope = rng.random_range(0..=3);
    match family % 4 {
        0 => DelayKind::Constant { delay: rng.random_range(1..=4) },
        1 => DelayKind::ConstantPeak { base: rng.random_range(1..=3), peak_start, peak_height, recovery_slope },
        2 => DelayKind::Normal {
            mean: rng.random_range(1.0..5.0),
            stddev: rng.random_range(0.0..2.0),
            seed: rng.random(),
        },
        _ => DelayKind::NormalPeak {
            mean: rng.random_range(1.0..4.0),
            stddev: rng.random_range(0.0..1.5),
            seed: rng.random(),
            peak_start,
            peak_height,
            recovery_slope,
        },
    }
}

/// A random model, sometimes with a per-pair override.
pub fn random_delay_model<R: Rng + ?Sized>(rng: &mut R, nodes: usize, horizon: u64) -> DelayModel {
    let mut m = DelayModel::uniform(random_delay_kind(rng, horizon));
    if nodes > 1 && rng.random_bool(0.3) {
        let a = rng.random_range(0..nodes).to_string();
        let b = rng.random_range(0..nodes).to_string();
        if a != b {
            m = m.with_override(a, b, random_delay_kind(rng, horizon));
        }
    }
    m
}

/// Leaves used by [`random_iterm`]: `vars` variables of each type, on
/// streams `0..3*vars`.
pub fn leaf_pool(vars: u32) -> Vec<Leaf> {
    let mut out = Vec::new();
    for (i, ty) in TYPES.iter().enumerate() {
        for j in 0..vars {
            out.push(Leaf {
                var: InstantVar::new(StreamId(i as u32 * vars + j), 0),
                dtype: *ty,
                default: Value::zero(*ty),
            });
        }
    }
    out
}

fn iconst<R: Rng + ?Sized>(rng: &mut R, ty: DataType) -> Value {
    // Bias towards the values the rewrite rules look for.
    match (ty, rng.random_range(0..4)) {
        (DataType::Int, 0) => Value::Int(0),
        (DataType::Int, 1) => Value::Int(1),
        (DataType::Num, 0) => Value::Num(*[0.0, -0.0].choose(rng).expect("nonempty")),
        (DataType::Num, 1) => Value::Num(1.0),
        _ => random_const(rng, ty),
    }
}

/// A random type-correct instantiated term of type `ty`.
pub fn random_iterm<R: Rng + ?Sized>(rng: &mut R, pool: &[Leaf], ty: DataType, depth: usize) -> ITerm {
    if depth == 0 || rng.random_bool(0.2) {
        let fits: Vec<&Leaf> = pool.iter().filter(|l| l.dtype == ty).collect();
        return match fits.choose(rng) {
            Some(l) if rng.random_bool(0.6) => ITerm::Leaf(**l),
            _ => ITerm::Const(iconst(rng, ty)),
        };
    }
    let d = depth - 1;
    let num = |rng: &mut R| if rng.random_bool(0.5) { DataType::Int } else { DataType::Num };
    let ite = |rng: &mut R, ty: DataType| {
        ITerm::Apply(
            Func::Ite,
            vec![
                random_iterm(rng, pool, DataType::Bool, d),
                random_iterm(rng, pool, ty, d),
                random_iterm(rng, pool, ty, d),
            ],
        )
    };
    match ty {
        DataType::Bool => match rng.random_range(0..5) {
            0 => ITerm::Apply(Func::Not, vec![random_iterm(rng, pool, ty, d)]),
            1 => {
                let f = *[Func::And, Func::Or].choose(rng).expect("nonempty");
                ITerm::Apply(f, vec![random_iterm(rng, pool, ty, d), random_iterm(rng, pool, ty, d)])
            }
            2 => {
                let f = *[Func::AndN, Func::OrN].choose(rng).expect("nonempty");
                let n = rng.random_range(1..=4);
                ITerm::Apply(f, (0..n).map(|_| random_iterm(rng, pool, ty, d)).collect())
            }
            3 => ite(rng, ty),
            _ => {
                let f = *[Func::Lt, Func::Le, Func::Gt, Func::Ge, Func::Eq, Func::Ne].choose(rng).expect("nonempty");
                let (a, b) = (num(rng), num(rng));
                ITerm::Apply(f, vec![random_iterm(rng, pool, a, d), random_iterm(rng, pool, b, d)])
            }
        },
        _ => match rng.random_range(0..5) {
            0 => {
                let f = *[Func::Add, Func::Sub, Func::Mul, Func::Div].choose(rng).expect("nonempty");
                ITerm::Apply(f, vec![random_iterm(rng, pool, ty, d), random_iterm(rng, pool, ty, d)])
            }
            1 => ITerm::Apply(Func::Neg, vec![random_iterm(rng, pool, ty, d)]),
            2 => {
                let f = if ty == DataType::Int {
                    *[Func::Max, Func::Sum].choose(rng).expect("nonempty")
                } else {
                    *[Func::Max, Func::Sum, Func::Avg].choose(rng).expect("nonempty")
                };
                let n = rng.random_range(1..=3);
                ITerm::Apply(f, (0..n).map(|_| random_iterm(rng, pool, ty, d)).collect())
            }
            3 => ite(rng, ty),
            _ => {
                let f = *[Func::Add, Func::Mul].choose(rng).expect("nonempty");
                ITerm::Apply(f, vec![random_iterm(rng, pool, ty, d), random_iterm(rng, pool, ty, d)])
            }
        },
    }
}

/// A random value for every leaf in `pool`.
pub fn random_substitution<R: Rng + ?Sized>(rng: &mut R, pool: &[Leaf]) -> BTreeMap<InstantVar, Value> {
    pool.iter().map(|l| (l.var, iconst(rng, l.dtype))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::classify_spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn specs_are_well_formed_and_reproducible() {
        let shape = SpecShape::default();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = random_spec(&mut a, &shape);
            assert_eq!(s, random_spec(&mut b, &shape));
            assert!(s.streams.len() <= 6);
            assert!(classify_spec(&s).well_formed);
            let placed = random_placement(&mut a, &s, 4);
            assert_eq!(placed, random_placement(&mut b, &s, 4));
            assert!(classify_spec(&placed).well_formed);
            assert!(placed.nodes.len() <= 4);
        }
    }

    #[test]
    fn iterms_type_check() {
        let pool = leaf_pool(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            for ty in TYPES {
                let t = random_iterm(&mut rng, &pool, ty, 4);
                let numeric_ok = ty.is_numeric() && t.dtype().is_numeric();
                assert!(t.dtype() == ty || numeric_ok, "{t:?}");
            }
        }
    }
}
