//! Recursive-descent parser for the hybrid-program DSL.
//!
//! Programs: `++` binds loosest, then `;`; both associate to the right and a
//! `;` may trail a program. Formulas: `->` (right-associative) below `|`
//! below `&` below the prefix forms `!`, `forall x`, `exists x`, `[p]`,
//! `<p>`. Terms use the usual arithmetic precedence plus `min(a, b)` and
//! `max(a, b)`.

use std::collections::BTreeSet;

use super::ast::{BinOp, Formula, OdeSystem, Program, Rel, Term};
use super::error::{ParseError, Pos, SemanticError, SyntaxError};
use super::lexer::{tokenize, Tok, Token};
use super::model::{Decl, Interval};

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    parse_program_at(src, 1)
}

pub fn parse_formula(src: &str) -> Result<Formula, ParseError> {
    parse_formula_at(src, 1)
}

pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    parse_term_at(src, 1)
}

pub(crate) fn parse_program_at(src: &str, first_line: usize) -> Result<Program, ParseError> {
    Parser::new(tokenize(src, first_line)?).run(Parser::program)
}

pub(crate) fn parse_formula_at(src: &str, first_line: usize) -> Result<Formula, ParseError> {
    Parser::new(tokenize(src, first_line)?).run(Parser::formula)
}

pub(crate) fn parse_term_at(src: &str, first_line: usize) -> Result<Term, ParseError> {
    Parser::new(tokenize(src, first_line)?).run(Parser::term)
}

/// One `name in I`, `name = t` or `name = t in I` line of a model file.
pub(crate) fn parse_decl_at(src: &str, line: usize) -> Result<Decl, ParseError> {
    Parser::new(tokenize(src, line)?).run(Parser::decl)
}

enum Fail {
    Syntax,
    Semantic(SemanticError),
}

type PResult<T> = Result<T, Fail>;

struct Parser {
    toks: Vec<Token>,
    at: usize,
    furthest: usize,
    expected: BTreeSet<String>,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Self {
            toks,
            at: 0,
            furthest: 0,
            expected: BTreeSet::new(),
        }
    }

    fn run<T>(mut self, entry: fn(&mut Self) -> PResult<T>) -> Result<T, ParseError> {
        let result = entry(&mut self).and_then(|v| {
            if self.peek() == &Tok::Eof {
                Ok(v)
            } else {
                self.expect_none("end of input");
                Err(Fail::Syntax)
            }
        });
        match result {
            Ok(v) => Ok(v),
            Err(Fail::Semantic(e)) => Err(e.into()),
            Err(Fail::Syntax) => Err(self.syntax_error().into()),
        }
    }

    fn syntax_error(&self) -> SyntaxError {
        let tok = &self.toks[self.furthest.min(self.toks.len() - 1)];
        SyntaxError::new(
            tok.pos,
            format!("unexpected {}", tok.tok),
            self.expected.iter().cloned().collect(),
        )
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.at + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    /// Records that `what` would have been accepted at the current token.
    fn expect_none(&mut self, what: &str) {
        if self.at > self.furthest {
            self.furthest = self.at;
            self.expected.clear();
        }
        if self.at == self.furthest {
            self.expected.insert(what.to_string());
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            self.expect_none(&tok.to_string());
            false
        }
    }

    fn expect(&mut self, tok: &Tok) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(Fail::Syntax)
        }
    }

    fn ident(&mut self) -> PResult<String> {
        if let Tok::Ident(name) = self.peek() {
            let name = name.clone();
            self.bump();
            Ok(name)
        } else {
            self.expect_none("identifier");
            Err(Fail::Syntax)
        }
    }

    // ---- model declarations ----

    fn decl(&mut self) -> PResult<Decl> {
        let pos = self.pos();
        let name = self.ident()?;
        let mut value = None;
        if self.eat(&Tok::Eq) {
            value = Some(self.term()?);
            if !self.eat(&Tok::In) {
                return Ok(Decl {
                    name,
                    pos,
                    value,
                    range: None,
                });
            }
        } else {
            self.expect(&Tok::In)?;
        }
        let range = Some(self.interval()?);
        Ok(Decl {
            name,
            pos,
            value,
            range,
        })
    }

    fn interval(&mut self) -> PResult<Interval> {
        let lo_closed = match self.peek() {
            Tok::LBracket => true,
            Tok::LParen => false,
            _ => {
                self.expect_none(&Tok::LBracket.to_string());
                self.expect_none(&Tok::LParen.to_string());
                return Err(Fail::Syntax);
            }
        };
        self.bump();
        let lo = self.term()?;
        self.expect(&Tok::Comma)?;
        let hi = self.term()?;
        let hi_closed = match self.peek() {
            Tok::RBracket => true,
            Tok::RParen => false,
            _ => {
                self.expect_none(&Tok::RBracket.to_string());
                self.expect_none(&Tok::RParen.to_string());
                return Err(Fail::Syntax);
            }
        };
        self.bump();
        Ok(Interval {
            lo,
            lo_closed,
            hi,
            hi_closed,
        })
    }

    // ---- programs ----

    fn program(&mut self) -> PResult<Program> {
        let lhs = self.seq()?;
        if self.eat(&Tok::Choice) {
            let rhs = self.program()?;
            Ok(Program::choice(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn ends_program(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Choice | Tok::RBrace | Tok::RBracket | Tok::Gt | Tok::Eof
        )
    }

    fn seq(&mut self) -> PResult<Program> {
        let lhs = self.postfix()?;
        if self.eat(&Tok::Semi) {
            if self.ends_program() {
                return Ok(lhs);
            }
            let rhs = self.seq()?;
            Ok(Program::seq(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn postfix(&mut self) -> PResult<Program> {
        let braced = self.peek() == &Tok::LBrace;
        let mut p = self.atom_program()?;
        if braced {
            while self.eat(&Tok::Star) {
                p = Program::star(p);
            }
        }
        Ok(p)
    }

    fn atom_program(&mut self) -> PResult<Program> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(_) if self.peek_at(1) == &Tok::Assign => {
                if self.peek_at(2) == &Tok::Star {
                    let x = self.ident()?;
                    self.bump();
                    self.bump();
                    return Ok(Program::RandomAssign(x));
                }
                self.jump_set()
            }
            Tok::Question => {
                self.bump();
                let f = self.formula()?;
                if !f.is_first_order_qf() {
                    return Err(Fail::Semantic(SemanticError::NonFirstOrderTest { pos }));
                }
                Ok(Program::Test(f))
            }
            Tok::LBrace => {
                self.bump();
                if let Tok::Primed(_) = self.peek() {
                    return self.ode();
                }
                let p = self.program()?;
                self.expect(&Tok::RBrace)?;
                Ok(p)
            }
            _ => {
                self.expect_none("identifier");
                self.expect_none(&Tok::Question.to_string());
                self.expect_none(&Tok::LBrace.to_string());
                Err(Fail::Syntax)
            }
        }
    }

    fn jump_set(&mut self) -> PResult<Program> {
        let mut eqs: Vec<(String, Term)> = Vec::new();
        loop {
            let pos = self.pos();
            let x = self.ident()?;
            self.expect(&Tok::Assign)?;
            let t = self.term()?;
            if eqs.iter().any(|(y, _)| *y == x) {
                return Err(Fail::Semantic(SemanticError::DuplicateAssign {
                    var: x,
                    pos,
                }));
            }
            eqs.push((x, t));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(Program::Jump(eqs))
    }

    /// Called after the opening brace.
    fn ode(&mut self) -> PResult<Program> {
        let mut equations: Vec<(String, Term)> = Vec::new();
        loop {
            let pos = self.pos();
            let x = match self.peek() {
                Tok::Primed(x) => x.clone(),
                _ => {
                    self.expect_none("primed variable");
                    return Err(Fail::Syntax);
                }
            };
            self.bump();
            self.expect(&Tok::Eq)?;
            let t = self.term()?;
            if equations.iter().any(|(y, _)| *y == x) {
                return Err(Fail::Semantic(SemanticError::DuplicateOdeVar {
                    var: x,
                    pos,
                }));
            }
            equations.push((x, t));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let domain = if self.eat(&Tok::Amp) {
            let pos = self.pos();
            let f = self.formula()?;
            if !f.is_first_order_qf() {
                return Err(Fail::Semantic(SemanticError::NonFirstOrderDomain { pos }));
            }
            f
        } else {
            Formula::True
        };
        self.expect(&Tok::RBrace)?;
        Ok(Program::Ode(OdeSystem { equations, domain }))
    }

    // ---- formulas ----

    fn formula(&mut self) -> PResult<Formula> {
        let lhs = self.disjunction()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.formula()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn disjunction(&mut self) -> PResult<Formula> {
        let mut lhs = self.conjunction()?;
        while self.eat(&Tok::Pipe) {
            let rhs = self.conjunction()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut lhs = self.unary_formula()?;
        while self.eat(&Tok::Amp) {
            let rhs = self.unary_formula()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_formula(&mut self) -> PResult<Formula> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.unary_formula()?))
            }
            Tok::Forall | Tok::Exists => {
                let universal = self.bump() == Tok::Forall;
                let x = self.ident()?;
                let body = Box::new(self.unary_formula()?);
                Ok(if universal {
                    Formula::Forall(x, body)
                } else {
                    Formula::Exists(x, body)
                })
            }
            Tok::LBracket => {
                self.bump();
                let p = self.program()?;
                self.expect(&Tok::RBracket)?;
                let body = self.unary_formula()?;
                Ok(Formula::Box(Box::new(p), Box::new(body)))
            }
            Tok::Lt => {
                self.bump();
                let p = self.program()?;
                self.expect(&Tok::Gt)?;
                let body = self.unary_formula()?;
                Ok(Formula::Diamond(Box::new(p), Box::new(body)))
            }
            _ => self.atom_formula(),
        }
    }

    fn atom_formula(&mut self) -> PResult<Formula> {
        match self.peek() {
            Tok::True => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::False => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::LParen => {
                let save = self.at;
                match self.comparison() {
                    Ok(f) => Ok(f),
                    Err(Fail::Semantic(e)) => Err(Fail::Semantic(e)),
                    Err(Fail::Syntax) => {
                        self.at = save;
                        self.bump();
                        let f = self.formula()?;
                        self.expect(&Tok::RParen)?;
                        Ok(f)
                    }
                }
            }
            _ => {
                for t in [Tok::Bang, Tok::LBracket, Tok::Lt, Tok::True, Tok::False] {
                    self.expect_none(&t.to_string());
                }
                self.expect_none("`forall`");
                self.expect_none("`exists`");
                self.comparison()
            }
        }
    }

    fn comparison(&mut self) -> PResult<Formula> {
        let lhs = self.term()?;
        let rel = match self.peek() {
            Tok::Lt => Rel::Lt,
            Tok::Le => Rel::Le,
            Tok::Eq => Rel::Eq,
            Tok::Ge => Rel::Ge,
            Tok::Gt => Rel::Gt,
            _ => {
                self.expect_none("comparison operator");
                return Err(Fail::Syntax);
            }
        };
        self.bump();
        let rhs = self.term()?;
        Ok(Formula::Cmp(rel, lhs, rhs))
    }

    // ---- terms ----

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => {
                    self.expect_none(&Tok::Plus.to_string());
                    self.expect_none(&Tok::Minus.to_string());
                    return Ok(lhs);
                }
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Term::bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut lhs = self.negation()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => {
                    self.expect_none(&Tok::Star.to_string());
                    self.expect_none(&Tok::Slash.to_string());
                    return Ok(lhs);
                }
            };
            self.bump();
            let rhs = self.negation()?;
            lhs = Term::bin(op, lhs, rhs);
        }
    }

    fn negation(&mut self) -> PResult<Term> {
        if self.eat(&Tok::Minus) {
            Ok(Term::Neg(Box::new(self.negation()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Term::Const(v))
            }
            Tok::Ident(x) => {
                self.bump();
                Ok(Term::Var(x))
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(&Tok::RParen)?;
                Ok(t)
            }
            Tok::Min | Tok::Max => {
                let op = if self.bump() == Tok::Min {
                    BinOp::Min
                } else {
                    BinOp::Max
                };
                self.expect(&Tok::LParen)?;
                let a = self.term()?;
                self.expect(&Tok::Comma)?;
                let b = self.term()?;
                self.expect(&Tok::RParen)?;
                Ok(Term::bin(op, a, b))
            }
            _ => {
                self.expect_none("number");
                self.expect_none("identifier");
                self.expect_none(&Tok::LParen.to_string());
                self.expect_none(&Tok::Minus.to_string());
                self.expect_none("`min`");
                self.expect_none("`max`");
                Err(Fail::Syntax)
            }
        }
    }
}
