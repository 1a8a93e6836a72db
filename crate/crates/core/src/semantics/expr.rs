//! Terms and quantifier-free formulas compiled against a signature.

use std::sync::Arc;

use thiserror::Error;

use super::state::{Signature, State};
use crate::syntax::{formula_to_string, term_to_string, BinOp, Formula, Rel, Term};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero in `{term}`")]
    DivisionByZero { term: String },
    #[error("`{term}` evaluates to a non-finite value")]
    NonFinite { term: String },
    #[error("`{formula}` has a quantifier or modality; use the checker for those")]
    UnsupportedFragment { formula: String },
}

#[derive(Debug, Clone)]
pub enum Expr {
    Slot(usize),
    Const(f64),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Keeps the source text for error messages.
    Div(Box<Expr>, Box<Expr>, Arc<str>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn compile(t: &Term, sig: &Signature) -> Result<Self, EvalError> {
        let c = |t: &Term| Self::compile(t, sig).map(Box::new);
        Ok(match t {
            Term::Var(x) => Expr::Slot(sig.slot(x).ok_or_else(|| EvalError::Unbound(x.clone()))?),
            Term::Const(v) => Expr::Const(*v),
            Term::Neg(a) => Expr::Neg(c(a)?),
            Term::Bin(op, a, b) => {
                let (a, b) = (c(a)?, c(b)?);
                match op {
                    BinOp::Add => Expr::Add(a, b),
                    BinOp::Sub => Expr::Sub(a, b),
                    BinOp::Mul => Expr::Mul(a, b),
                    BinOp::Div => Expr::Div(a, b, term_to_string(t).into()),
                    BinOp::Min => Expr::Min(a, b),
                    BinOp::Max => Expr::Max(a, b),
                }
            }
        })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Slot(i) => x[*i],
            Expr::Const(v) => *v,
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b, text) => {
                let (num, den) = (a.eval(x)?, b.eval(x)?);
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero {
                        term: text.to_string(),
                    });
                }
                num / den
            }
            Expr::Min(a, b) => a.eval(x)?.min(b.eval(x)?),
            Expr::Max(a, b) => a.eval(x)?.max(b.eval(x)?),
        })
    }

    pub fn reads(&self, slot: usize) -> bool {
        match self {
            Expr::Slot(i) => *i == slot,
            Expr::Const(_) => false,
            Expr::Neg(a) => a.reads(slot),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b, _)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => a.reads(slot) || b.reads(slot),
        }
    }

    /// Marks every slot the expression reads.
    pub fn mark_reads(&self, out: &mut [bool]) {
        match self {
            Expr::Slot(i) => out[*i] = true,
            Expr::Const(_) => {}
            Expr::Neg(a) => a.mark_reads(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b, _)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.mark_reads(out);
                b.mark_reads(out);
            }
        }
    }
}

/// An expression paired with its source, checked for a finite result.
#[derive(Debug, Clone)]
pub struct CompiledTerm {
    pub expr: Expr,
    pub text: Arc<str>,
}

impl CompiledTerm {
    pub fn compile(t: &Term, sig: &Signature) -> Result<Self, EvalError> {
        Ok(Self {
            expr: Expr::compile(t, sig)?,
            text: term_to_string(t).into(),
        })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = self.expr.eval(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                term: self.text.to_string(),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub enum Pred {
    True,
    False,
    Cmp(Rel, Expr, Expr),
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Implies(Box<Pred>, Box<Pred>),
}

impl Pred {
    pub fn compile(f: &Formula, sig: &Signature) -> Result<Self, EvalError> {
        let c = |f: &Formula| Self::compile(f, sig).map(Box::new);
        Ok(match f {
            Formula::True => Pred::True,
            Formula::False => Pred::False,
            Formula::Cmp(rel, a, b) => {
                Pred::Cmp(*rel, Expr::compile(a, sig)?, Expr::compile(b, sig)?)
            }
            Formula::Not(a) => Pred::Not(c(a)?),
            Formula::And(a, b) => Pred::And(c(a)?, c(b)?),
            Formula::Or(a, b) => Pred::Or(c(a)?, c(b)?),
            Formula::Implies(a, b) => Pred::Implies(c(a)?, c(b)?),
            Formula::Forall(..) | Formula::Exists(..) | Formula::Box(..) | Formula::Diamond(..) => {
                return Err(EvalError::UnsupportedFragment {
                    formula: formula_to_string(f),
                })
            }
        })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Result<bool, EvalError> {
        Ok(match self {
            Pred::True => true,
            Pred::False => false,
            Pred::Cmp(rel, a, b) => rel.holds(a.eval(x)?, b.eval(x)?),
            Pred::Not(a) => !a.eval(x)?,
            Pred::And(a, b) => a.eval(x)? && b.eval(x)?,
            Pred::Or(a, b) => a.eval(x)? || b.eval(x)?,
            Pred::Implies(a, b) => !a.eval(x)? || b.eval(x)?,
        })
    }

    pub fn mark_reads(&self, out: &mut [bool]) {
        match self {
            Pred::True | Pred::False => {}
            Pred::Cmp(_, a, b) => {
                a.mark_reads(out);
                b.mark_reads(out);
            }
            Pred::Not(a) => a.mark_reads(out),
            Pred::And(a, b) | Pred::Or(a, b) | Pred::Implies(a, b) => {
                a.mark_reads(out);
                b.mark_reads(out);
            }
        }
    }
}

/// Value of `t` in `s`.
pub fn eval_term(s: &State, t: &Term) -> Result<f64, EvalError> {
    CompiledTerm::compile(t, s.signature())?.eval(s.values())
}

/// Truth value of a quantifier- and modality-free formula in `s`.
pub fn eval_formula(s: &State, f: &Formula) -> Result<bool, EvalError> {
    Pred::compile(f, s.signature())?.eval(s.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_formula, parse_term};

    #[test]
    fn term_examples() {
        let s = State::from_pairs(&[("x", 2.0)]);
        assert_eq!(eval_term(&s, &parse_term("3*x+1").unwrap()), Ok(7.0));
        let s = State::from_pairs(&[("d", 0.4), ("sV", 0.6)]);
        assert_eq!(eval_term(&s, &parse_term("min(d,sV)").unwrap()), Ok(0.4));
        let s = State::from_pairs(&[("x", 1.0)]);
        assert_eq!(
            eval_term(&s, &parse_term("2 + x/0").unwrap()),
            Err(EvalError::DivisionByZero { term: "x/0".into() })
        );
        assert_eq!(
            eval_term(&s, &parse_term("y").unwrap()),
            Err(EvalError::Unbound("y".into()))
        );
        let s = State::from_pairs(&[("x", 1e300)]);
        assert!(matches!(
            eval_term(&s, &parse_term("x*x").unwrap()),
            Err(EvalError::NonFinite { .. })
        ));
    }

    #[test]
    fn formula_examples() {
        let f = parse_formula("k1>=0 & k1<0.5").unwrap();
        assert_eq!(
            eval_formula(&State::from_pairs(&[("k1", 0.2)]), &f),
            Ok(true)
        );
        let g = parse_formula("k1>=0").unwrap();
        assert_eq!(
            eval_formula(&State::from_pairs(&[("k1", -0.1)]), &g),
            Ok(false)
        );
        let s = State::from_pairs(&[("a", 1.0), ("b", 0.0)]);
        assert_eq!(
            eval_formula(&s, &parse_formula("a > 0 -> b > 0").unwrap()),
            Ok(false)
        );
        assert_eq!(
            eval_formula(&s, &parse_formula("!(a > 0) | b = 0").unwrap()),
            Ok(true)
        );
    }

    #[test]
    fn modalities_are_rejected() {
        let s = State::from_pairs(&[("x", 0.0)]);
        let f = parse_formula("[x:=1] x > 0").unwrap();
        assert!(matches!(
            eval_formula(&s, &f),
            Err(EvalError::UnsupportedFragment { .. })
        ));
        let f = parse_formula("forall y y > x").unwrap();
        assert!(matches!(
            eval_formula(&s, &f),
            Err(EvalError::UnsupportedFragment { .. })
        ));
    }
}
