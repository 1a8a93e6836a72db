//! Proptest strategies for syntax trees, shared by the test suites.

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

use crate::syntax::lexer::is_keyword;
use crate::syntax::{BinOp, Formula, OdeSystem, Program, Rel, Term};

/// Short lower-case identifiers that are not keywords.
pub fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,3}".prop_filter("keyword", |s| !is_keyword(s))
}

/// Nonnegative finite constants; negative numbers are written as negation.
pub fn constant() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..100).prop_map(f64::from),
        (0u32..10_000).prop_map(|n| f64::from(n) / 64.0),
        0.0f64..1e6,
    ]
}

pub fn term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        ident().prop_map(Term::Var),
        constant().prop_map(Term::Const)
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Min),
            Just(BinOp::Max),
        ];
        prop_oneof![
            inner.clone().prop_map(|t| Term::Neg(Box::new(t))),
            (op, inner.clone(), inner).prop_map(|(op, a, b)| Term::bin(op, a, b)),
        ]
    })
}

fn rel() -> impl Strategy<Value = Rel> {
    prop_oneof![
        Just(Rel::Lt),
        Just(Rel::Le),
        Just(Rel::Eq),
        Just(Rel::Ge),
        Just(Rel::Gt)
    ]
}

/// Quantifier- and modality-free formulas.
pub fn qf_formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        1 => Just(Formula::True),
        1 => Just(Formula::False),
        6 => (rel(), term(), term()).prop_map(|(r, a, b)| Formula::cmp(r, a, b)),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::implies(a, b)),
        ]
    })
}

fn distinct_vars(max: usize) -> impl Strategy<Value = Vec<String>> {
    btree_set(ident(), 1..=max).prop_map(|s| s.into_iter().collect())
}

pub fn program() -> impl Strategy<Value = Program> {
    let jump = distinct_vars(3)
        .prop_flat_map(|xs| {
            let n = xs.len();
            (Just(xs), vec(term(), n))
        })
        .prop_map(|(xs, ts)| Program::Jump(xs.into_iter().zip(ts).collect()));
    let ode = (distinct_vars(3), qf_formula())
        .prop_flat_map(|(xs, dom)| {
            let n = xs.len();
            (Just(xs), vec(term(), n), Just(dom))
        })
        .prop_map(|(xs, ts, domain)| {
            Program::Ode(OdeSystem {
                equations: xs.into_iter().zip(ts).collect(),
                domain,
            })
        });
    let leaf = prop_oneof![
        3 => jump,
        1 => ident().prop_map(Program::RandomAssign),
        2 => qf_formula().prop_map(Program::Test),
        2 => ode,
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::choice(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::seq(a, b)),
            inner.prop_map(Program::star),
        ]
    })
}

/// Formulas of the full logic, with quantifiers and modalities.
pub fn formula() -> impl Strategy<Value = Formula> {
    qf_formula().prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (ident(), inner.clone()).prop_map(|(x, f)| Formula::Forall(x, Box::new(f))),
            (ident(), inner.clone()).prop_map(|(x, f)| Formula::Exists(x, Box::new(f))),
            (program(), inner.clone()).prop_map(|(p, f)| Formula::Box(Box::new(p), Box::new(f))),
            (program(), inner).prop_map(|(p, f)| Formula::Diamond(Box::new(p), Box::new(f))),
        ]
    })
}
