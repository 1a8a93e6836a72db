//! Hybrid programs compiled to numbered atomic steps plus a regular-expression
//! shape over them.
//!
//! Atoms are numbered left to right. The position sets of the shape (which
//! atoms can start a run, end a run, or directly follow each other) decide
//! whether a sequence of atoms is a run prefix of the program and whether a
//! state reached after an atom is final.

use std::sync::Arc;

use super::expr::{CompiledTerm, EvalError, Pred};
use super::state::Signature;
use crate::syntax::{pretty, Formula, Interval, OdeSystem, Program, Rel, Term};

/// Amount by which open interval ends are moved inward when sampling.
pub const BOUND_SHIFT: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RangeSpec {
    pub lo: CompiledTerm,
    pub lo_closed: bool,
    pub hi: CompiledTerm,
    pub hi_closed: bool,
}

impl RangeSpec {
    pub fn compile(i: &Interval, sig: &Signature) -> Result<Self, EvalError> {
        Ok(Self {
            lo: CompiledTerm::compile(&i.lo, sig)?,
            lo_closed: i.lo_closed,
            hi: CompiledTerm::compile(&i.hi, sig)?,
            hi_closed: i.hi_closed,
        })
    }

    /// Sampling bounds after the inward shift of open ends. `None` when the
    /// shifted interval is empty.
    pub fn sampling_bounds(&self, x: &[f64]) -> Result<Option<(f64, f64)>, EvalError> {
        let mut lo = self.lo.eval(x)?;
        let mut hi = self.hi.eval(x)?;
        if !self.lo_closed {
            lo += BOUND_SHIFT;
        }
        if !self.hi_closed {
            hi -= BOUND_SHIFT;
        }
        Ok((lo <= hi).then_some((lo, hi)))
    }

    /// `n` evenly spaced points over the sampling bounds, ascending; a single
    /// point is the midpoint.
    pub fn grid(&self, x: &[f64], n: usize) -> Result<Vec<f64>, EvalError> {
        let Some((lo, hi)) = self.sampling_bounds(x)? else {
            return Ok(Vec::new());
        };
        Ok(grid_points(lo, hi, n))
    }

    pub fn contains(&self, x: &[f64], v: f64) -> Result<bool, EvalError> {
        let lo = self.lo.eval(x)?;
        let hi = self.hi.eval(x)?;
        let above = if self.lo_closed { v >= lo } else { v > lo };
        let below = if self.hi_closed { v <= hi } else { v < hi };
        Ok(above && below)
    }

    pub fn midpoint(&self, x: &[f64]) -> Result<Option<f64>, EvalError> {
        Ok(self
            .sampling_bounds(x)?
            .map(|(lo, hi)| lo + 0.5 * (hi - lo)))
    }
}

pub(crate) fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo + 0.5 * (hi - lo)],
        _ if lo == hi => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * (i as f64 / (n - 1) as f64)
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct CompiledOde {
    pub slots: Vec<usize>,
    pub rhs: Vec<CompiledTerm>,
    pub domain: Pred,
    /// No right-hand side reads an evolving variable, so the field is
    /// constant along the flow.
    pub constant_field: bool,
    /// The domain as a list of `slot rel constant` conjuncts, when it has
    /// that form.
    bounds: Option<Vec<(usize, Rel, f64)>>,
}

fn simple_bounds(f: &Formula, sig: &Signature, out: &mut Vec<(usize, Rel, f64)>) -> bool {
    match f {
        Formula::True => true,
        Formula::And(a, b) => simple_bounds(a, sig, out) && simple_bounds(b, sig, out),
        Formula::Cmp(rel, Term::Var(x), Term::Const(c)) => match sig.slot(x) {
            Some(slot) => {
                out.push((slot, *rel, *c));
                true
            }
            None => false,
        },
        _ => false,
    }
}

impl CompiledOde {
    pub fn compile(ode: &OdeSystem, sig: &Signature) -> Result<Self, EvalError> {
        let slots = ode
            .equations
            .iter()
            .map(|(x, _)| sig.slot(x).ok_or_else(|| EvalError::Unbound(x.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let rhs = ode
            .equations
            .iter()
            .map(|(_, t)| CompiledTerm::compile(t, sig))
            .collect::<Result<Vec<_>, _>>()?;
        let constant_field = !rhs.iter().any(|r| slots.iter().any(|&s| r.expr.reads(s)));
        let mut b = Vec::new();
        let bounds = simple_bounds(&ode.domain, sig, &mut b).then_some(b);
        Ok(Self {
            slots,
            rhs,
            domain: Pred::compile(&ode.domain, sig)?,
            constant_field,
            bounds,
        })
    }

    #[inline]
    pub fn in_domain(&self, x: &[f64]) -> Result<bool, EvalError> {
        match &self.bounds {
            Some(b) => Ok(b.iter().all(|&(s, rel, c)| rel.holds(x[s], c))),
            None => self.domain.eval(x),
        }
    }
}

#[derive(Debug, Clone)]
pub enum AtomKind {
    Jump(Vec<(usize, CompiledTerm)>),
    Random {
        slot: usize,
        range: Option<RangeSpec>,
    },
    Test(Pred),
    Ode(CompiledOde),
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub id: usize,
    pub kind: AtomKind,
    pub label: Arc<str>,
    pub ast: Program,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Atom(usize),
    Choice(Box<Shape>, Box<Shape>),
    Seq(Box<Shape>, Box<Shape>),
    Star(Box<Shape>),
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub atoms: Vec<Atom>,
    pub shape: Shape,
    nullable: bool,
    first: Vec<bool>,
    last: Vec<bool>,
    follow: Vec<Vec<bool>>,
}

struct Positions {
    nullable: bool,
    first: Vec<usize>,
    last: Vec<usize>,
}

impl CompiledProgram {
    /// `range_of` supplies the declared range of a variable slot, used by
    /// `x:=*`.
    pub fn compile(
        p: &Program,
        sig: &Signature,
        range_of: &dyn Fn(usize) -> Option<RangeSpec>,
    ) -> Result<Self, EvalError> {
        let mut atoms = Vec::new();
        let shape = Self::build(p, sig, range_of, &mut atoms)?;
        let n = atoms.len();
        let mut follow = vec![vec![false; n]; n];
        let pos = Self::positions(&shape, &mut follow);
        let mut first = vec![false; n];
        let mut last = vec![false; n];
        pos.first.iter().for_each(|&i| first[i] = true);
        pos.last.iter().for_each(|&i| last[i] = true);
        Ok(Self {
            atoms,
            shape,
            nullable: pos.nullable,
            first,
            last,
            follow,
        })
    }

    fn build(
        p: &Program,
        sig: &Signature,
        range_of: &dyn Fn(usize) -> Option<RangeSpec>,
        atoms: &mut Vec<Atom>,
    ) -> Result<Shape, EvalError> {
        let atom = |kind: AtomKind, atoms: &mut Vec<Atom>| {
            let id = atoms.len();
            atoms.push(Atom {
                id,
                kind,
                label: pretty::atom_label(p).into(),
                ast: p.clone(),
            });
            Shape::Atom(id)
        };
        Ok(match p {
            Program::Jump(eqs) => {
                let eqs = eqs
                    .iter()
                    .map(|(x, t)| {
                        let slot = sig.slot(x).ok_or_else(|| EvalError::Unbound(x.clone()))?;
                        Ok((slot, CompiledTerm::compile(t, sig)?))
                    })
                    .collect::<Result<Vec<_>, EvalError>>()?;
                atom(AtomKind::Jump(eqs), atoms)
            }
            Program::RandomAssign(x) => {
                let slot = sig.slot(x).ok_or_else(|| EvalError::Unbound(x.clone()))?;
                atom(
                    AtomKind::Random {
                        slot,
                        range: range_of(slot),
                    },
                    atoms,
                )
            }
            Program::Test(f) => atom(AtomKind::Test(Pred::compile(f, sig)?), atoms),
            Program::Ode(ode) => atom(AtomKind::Ode(CompiledOde::compile(ode, sig)?), atoms),
            Program::Choice(a, b) => Shape::Choice(
                Box::new(Self::build(a, sig, range_of, atoms)?),
                Box::new(Self::build(b, sig, range_of, atoms)?),
            ),
            Program::Seq(a, b) => Shape::Seq(
                Box::new(Self::build(a, sig, range_of, atoms)?),
                Box::new(Self::build(b, sig, range_of, atoms)?),
            ),
            Program::Star(a) => Shape::Star(Box::new(Self::build(a, sig, range_of, atoms)?)),
        })
    }

    fn positions(s: &Shape, follow: &mut [Vec<bool>]) -> Positions {
        match s {
            Shape::Atom(i) => Positions {
                nullable: false,
                first: vec![*i],
                last: vec![*i],
            },
            Shape::Choice(a, b) => {
                let (pa, pb) = (Self::positions(a, follow), Self::positions(b, follow));
                Positions {
                    nullable: pa.nullable || pb.nullable,
                    first: [pa.first, pb.first].concat(),
                    last: [pa.last, pb.last].concat(),
                }
            }
            Shape::Seq(a, b) => {
                let (pa, pb) = (Self::positions(a, follow), Self::positions(b, follow));
                for &x in &pa.last {
                    for &y in &pb.first {
                        follow[x][y] = true;
                    }
                }
                let mut first = pa.first;
                if pa.nullable {
                    first.extend(&pb.first);
                }
                let mut last = pb.last;
                if pb.nullable {
                    last.extend(&pa.last);
                }
                Positions {
                    nullable: pa.nullable && pb.nullable,
                    first,
                    last,
                }
            }
            Shape::Star(a) => {
                let pa = Self::positions(a, follow);
                for &x in &pa.last {
                    for &y in &pa.first {
                        follow[x][y] = true;
                    }
                }
                Positions {
                    nullable: true,
                    first: pa.first,
                    last: pa.last,
                }
            }
        }
    }

    /// The empty run is a run of the program.
    pub fn nullable(&self) -> bool {
        self.nullable
    }

    pub fn can_start(&self, atom: usize) -> bool {
        self.first[atom]
    }

    /// A state reached right after `atom` may end a run.
    pub fn can_end(&self, atom: usize) -> bool {
        self.last[atom]
    }

    pub fn can_follow(&self, prev: usize, next: usize) -> bool {
        self.follow[prev][next]
    }

    /// Checks that `path` spells a complete run of the program.
    pub fn accepts(&self, path: &[usize]) -> bool {
        if path.iter().any(|&a| a >= self.atoms.len()) {
            return false;
        }
        match (path.first(), path.last()) {
            (None, _) => self.nullable,
            (Some(&a), Some(&z)) => {
                self.can_start(a)
                    && self.can_end(z)
                    && path.windows(2).all(|w| self.can_follow(w[0], w[1]))
            }
            _ => unreachable!(),
        }
    }
}
