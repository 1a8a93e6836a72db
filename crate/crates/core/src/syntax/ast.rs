//! Syntax trees for terms, formulas and hybrid programs.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Min => "min",
            BinOp::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    /// Literal values are nonnegative; negation is a separate node.
    Const(f64),
    Neg(Box<Term>),
    Bin(BinOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn bin(op: BinOp, lhs: Term, rhs: Term) -> Self {
        Term::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Evaluates with `lookup` supplying variable values. Returns `None` on an
    /// unknown variable, a zero divisor or a non-finite result.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        let v = match self {
            Term::Var(x) => lookup(x)?,
            Term::Const(c) => *c,
            Term::Neg(a) => -a.eval_with(lookup)?,
            Term::Bin(op, a, b) => {
                let (a, b) = (a.eval_with(lookup)?, b.eval_with(lookup)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return None,
                    BinOp::Div => a / b,
                    BinOp::Min => a.min(b),
                    BinOp::Max => a.max(b),
                }
            }
        };
        v.is_finite().then_some(v)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Const(_) => {}
            Term::Neg(t) => t.collect_vars(out),
            Term::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Rel::Lt => a < b,
            Rel::Le => a <= b,
            Rel::Eq => a == b,
            Rel::Ge => a >= b,
            Rel::Gt => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Cmp(Rel, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
    Box(Box<Program>, Box<Formula>),
    Diamond(Box<Program>, Box<Formula>),
}

impl Formula {
    pub fn cmp(rel: Rel, lhs: Term, rhs: Term) -> Self {
        Formula::Cmp(rel, lhs, rhs)
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// True when the formula has no quantifier and no modality.
    pub fn is_first_order_qf(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Cmp(..) => true,
            Formula::Not(a) => a.is_first_order_qf(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_first_order_qf() && b.is_first_order_qf()
            }
            Formula::Forall(..) | Formula::Exists(..) | Formula::Box(..) | Formula::Diamond(..) => {
                false
            }
        }
    }

    /// Free variables, with quantified names removed from their bodies.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Formula::Not(a) => a.collect_free(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            Formula::Forall(x, body) | Formula::Exists(x, body) => {
                let mut inner = BTreeSet::new();
                body.collect_free(&mut inner);
                inner.remove(x);
                out.extend(inner);
            }
            Formula::Box(p, body) | Formula::Diamond(p, body) => {
                p.collect_vars(out);
                body.collect_free(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    pub equations: Vec<(String, Term)>,
    pub domain: Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Program {
    /// Simultaneous assignment; every right-hand side reads the pre-state.
    Jump(Vec<(String, Term)>),
    RandomAssign(String),
    Test(Formula),
    Ode(OdeSystem),
    Choice(Box<Program>, Box<Program>),
    Seq(Box<Program>, Box<Program>),
    Star(Box<Program>),
}

impl Program {
    pub fn assign(var: impl Into<String>, rhs: Term) -> Self {
        Program::Jump(vec![(var.into(), rhs)])
    }

    pub fn choice(a: Program, b: Program) -> Self {
        Program::Choice(Box::new(a), Box::new(b))
    }

    pub fn seq(a: Program, b: Program) -> Self {
        Program::Seq(Box::new(a), Box::new(b))
    }

    pub fn star(a: Program) -> Self {
        Program::Star(Box::new(a))
    }

    /// Every variable the program mentions, read or written.
    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Program::Jump(eqs) => {
                for (x, t) in eqs {
                    out.insert(x.clone());
                    t.collect_vars(out);
                }
            }
            Program::RandomAssign(x) => {
                out.insert(x.clone());
            }
            Program::Test(f) => out.extend(f.free_vars()),
            Program::Ode(ode) => {
                for (x, t) in &ode.equations {
                    out.insert(x.clone());
                    t.collect_vars(out);
                }
                out.extend(ode.domain.free_vars());
            }
            Program::Choice(a, b) | Program::Seq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Program::Star(a) => a.collect_vars(out),
        }
    }

    /// Variables that some atomic step may write.
    pub fn written_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Program::Jump(eqs) => out.extend(eqs.iter().map(|(x, _)| x.clone())),
            Program::RandomAssign(x) => {
                out.insert(x.clone());
            }
            Program::Test(_) => {}
            Program::Ode(ode) => out.extend(ode.equations.iter().map(|(x, _)| x.clone())),
            Program::Choice(a, b) | Program::Seq(a, b) => {
                a.written_vars(out);
                b.written_vars(out);
            }
            Program::Star(a) => a.written_vars(out),
        }
    }

    /// Nodes of an ODE system appearing anywhere in the program, left to right.
    pub fn odes(&self) -> Vec<&OdeSystem> {
        let mut out = Vec::new();
        self.visit_odes(&mut out);
        out
    }

    fn visit_odes<'a>(&'a self, out: &mut Vec<&'a OdeSystem>) {
        match self {
            Program::Ode(ode) => out.push(ode),
            Program::Choice(a, b) | Program::Seq(a, b) => {
                a.visit_odes(out);
                b.visit_odes(out);
            }
            Program::Star(a) => a.visit_odes(out),
            _ => {}
        }
    }
}
