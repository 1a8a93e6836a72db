//! Canonical text for syntax trees, with the fewest parentheses and braces
//! that reparse to the same tree.

use super::ast::{BinOp, Formula, OdeSystem, Program, Term};

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Term::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Term::Neg(_) => 3,
        Term::Var(_) | Term::Const(_) | Term::Bin(BinOp::Min | BinOp::Max, ..) => 4,
    }
}

pub fn term_to_string(t: &Term) -> String {
    let mut s = String::new();
    write_term(t, &mut s);
    s
}

fn write_term_prec(t: &Term, min: u8, out: &mut String) {
    if term_prec(t) < min {
        out.push('(');
        write_term(t, out);
        out.push(')');
    } else {
        write_term(t, out);
    }
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Var(x) => out.push_str(x),
        Term::Const(c) => out.push_str(&format!("{c}")),
        Term::Neg(a) => {
            out.push('-');
            let mut inner = String::new();
            write_term_prec(a, 3, &mut inner);
            if inner.starts_with('-') {
                out.push(' ');
            }
            out.push_str(&inner);
        }
        Term::Bin(op @ (BinOp::Min | BinOp::Max), a, b) => {
            out.push_str(op.symbol());
            out.push('(');
            write_term(a, out);
            out.push_str(", ");
            write_term(b, out);
            out.push(')');
        }
        Term::Bin(op, a, b) => {
            let p = term_prec(t);
            write_term_prec(a, p, out);
            if p == 1 {
                out.push_str(&format!(" {} ", op.symbol()));
            } else {
                out.push_str(op.symbol());
            }
            write_term_prec(b, p + 1, out);
        }
    }
}

fn formula_prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 0,
        Formula::Or(..) => 1,
        Formula::And(..) => 2,
        Formula::Not(_)
        | Formula::Forall(..)
        | Formula::Exists(..)
        | Formula::Box(..)
        | Formula::Diamond(..) => 3,
        Formula::True | Formula::False | Formula::Cmp(..) => 4,
    }
}

pub fn formula_to_string(f: &Formula) -> String {
    let mut s = String::new();
    write_formula(f, &mut s);
    s
}

fn write_formula_prec(f: &Formula, min: u8, out: &mut String) {
    if formula_prec(f) < min {
        out.push('(');
        write_formula(f, out);
        out.push(')');
    } else {
        write_formula(f, out);
    }
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Cmp(rel, a, b) => {
            write_term(a, out);
            out.push_str(&format!(" {} ", rel.symbol()));
            write_term(b, out);
        }
        Formula::Not(a) => {
            out.push('!');
            write_formula_prec(a, 3, out);
        }
        Formula::And(a, b) => {
            write_formula_prec(a, 2, out);
            out.push_str(" & ");
            write_formula_prec(b, 3, out);
        }
        Formula::Or(a, b) => {
            write_formula_prec(a, 1, out);
            out.push_str(" | ");
            write_formula_prec(b, 2, out);
        }
        Formula::Implies(a, b) => {
            write_formula_prec(a, 1, out);
            out.push_str(" -> ");
            write_formula_prec(b, 0, out);
        }
        Formula::Forall(x, body) | Formula::Exists(x, body) => {
            let q = if matches!(f, Formula::Forall(..)) {
                "forall"
            } else {
                "exists"
            };
            out.push_str(&format!("{q} {x} "));
            write_formula_prec(body, 3, out);
        }
        Formula::Box(p, body) => {
            out.push('[');
            write_program(p, out);
            out.push(']');
            write_formula_prec(body, 3, out);
        }
        Formula::Diamond(p, body) => {
            out.push('<');
            write_program(p, out);
            out.push('>');
            write_formula_prec(body, 3, out);
        }
    }
}

fn program_prec(p: &Program) -> u8 {
    match p {
        Program::Choice(..) => 0,
        Program::Seq(..) => 1,
        _ => 2,
    }
}

pub fn program_to_string(p: &Program) -> String {
    let mut s = String::new();
    write_program(p, &mut s);
    s
}

/// Single-line label for an atomic program node, as used in traces.
pub fn atom_label(p: &Program) -> String {
    program_to_string(p)
}

fn write_program_prec(p: &Program, min: u8, out: &mut String) {
    if program_prec(p) < min {
        out.push('{');
        write_program(p, out);
        out.push('}');
    } else {
        write_program(p, out);
    }
}

pub fn ode_to_string(ode: &OdeSystem) -> String {
    let mut s = String::from("{");
    for (i, (x, t)) in ode.equations.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&format!("{x}'="));
        write_term(t, &mut s);
    }
    if ode.domain != Formula::True {
        s.push_str(" & ");
        write_formula(&ode.domain, &mut s);
    }
    s.push('}');
    s
}

fn write_program(p: &Program, out: &mut String) {
    match p {
        Program::Jump(eqs) => {
            for (i, (x, t)) in eqs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(x);
                out.push_str(":=");
                write_term(t, out);
            }
        }
        Program::RandomAssign(x) => {
            out.push_str(x);
            out.push_str(":=*");
        }
        Program::Test(f) => {
            out.push('?');
            write_formula_prec(f, 3, out);
        }
        Program::Ode(ode) => out.push_str(&ode_to_string(ode)),
        Program::Choice(a, b) => {
            write_program_prec(a, 1, out);
            out.push_str(" ++ ");
            write_program(b, out);
        }
        Program::Seq(a, b) => {
            write_program_prec(a, 2, out);
            out.push_str("; ");
            write_program_prec(b, 1, out);
        }
        Program::Star(body) => {
            if let Program::Ode(ode) = body.as_ref() {
                out.push_str(&ode_to_string(ode));
            } else {
                out.push('{');
                write_program(body, out);
                out.push('}');
            }
            out.push('*');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_formula, parse_program};

    #[test]
    fn canonical_forms() {
        assert_eq!(
            program_to_string(&Program::assign("pi", Term::Const(1.0))),
            "pi:=1"
        );
        let p = parse_program("a:=1 ++ b:=2").unwrap();
        assert_eq!(program_to_string(&p), "a:=1 ++ b:=2");
        let p = parse_program("{a:=1 ++ b:=2}; c:=3").unwrap();
        assert_eq!(program_to_string(&p), "{a:=1 ++ b:=2}; c:=3");
        let p = parse_program("{x'=1 & true}*").unwrap();
        assert_eq!(program_to_string(&p), "{x'=1}*");
        let p = parse_program("?(x>0 & y>0); z:=x-(y-1)").unwrap();
        assert_eq!(program_to_string(&p), "?(x > 0 & y > 0); z:=x - (y - 1)");
    }

    #[test]
    fn nested_negation_reparses() {
        let t = Term::Neg(Box::new(Term::Neg(Box::new(Term::var("x")))));
        let text = term_to_string(&t);
        assert_eq!(text, "- -x");
        let f = parse_formula(&format!("{text} > 0")).unwrap();
        assert_eq!(
            f,
            Formula::cmp(crate::syntax::ast::Rel::Gt, t, Term::Const(0.0))
        );
    }

    #[test]
    fn modal_bodies_are_parenthesized() {
        let f = parse_formula("[x:=1](x>0 & y>0)").unwrap();
        assert_eq!(formula_to_string(&f), "[x:=1](x > 0 & y > 0)");
        assert_eq!(parse_formula(&formula_to_string(&f)).unwrap(), f);
    }
}
