//! Which slots can influence the rest of a run from a loop head.

use crate::semantics::{AtomKind, CompiledProgram, Shape};

/// How a slot enters the merge key of a loop-head state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum KeySlot {
    /// Never read again before being overwritten.
    Dead,
    /// Never written by the program: compared exactly.
    Exact,
    /// Written somewhere: compared by cell.
    Cell,
}

fn reads_writes(prog: &CompiledProgram, atom: usize, n: usize) -> (Vec<bool>, Vec<bool>) {
    let mut r = vec![false; n];
    let mut w = vec![false; n];
    match &prog.atoms[atom].kind {
        AtomKind::Jump(eqs) => {
            for (slot, t) in eqs {
                t.expr.mark_reads(&mut r);
                w[*slot] = true;
            }
        }
        AtomKind::Random { slot, range } => {
            if let Some(range) = range {
                range.lo.expr.mark_reads(&mut r);
                range.hi.expr.mark_reads(&mut r);
            }
            w[*slot] = true;
        }
        AtomKind::Test(p) => p.mark_reads(&mut r),
        AtomKind::Ode(ode) => {
            for t in &ode.rhs {
                t.expr.mark_reads(&mut r);
            }
            ode.domain.mark_reads(&mut r);
            for &s in &ode.slots {
                // The flow starts from the current value.
                r[s] = true;
                w[s] = true;
            }
        }
    }
    (r, w)
}

/// Slots written by some atom.
pub(crate) fn written(prog: &CompiledProgram, n: usize) -> Vec<bool> {
    let mut out = vec![false; n];
    for a in 0..prog.atoms.len() {
        let (_, w) = reads_writes(prog, a, n);
        out.iter_mut().zip(w).for_each(|(o, w)| *o |= w);
    }
    out
}

fn live_in(prog: &CompiledProgram, shape: &Shape, out: &[bool]) -> Vec<bool> {
    match shape {
        Shape::Atom(a) => {
            let (r, w) = reads_writes(prog, *a, out.len());
            out.iter()
                .zip(r.iter().zip(&w))
                .map(|(&o, (&r, &w))| r || (o && !w))
                .collect()
        }
        Shape::Choice(a, b) => {
            let (la, lb) = (live_in(prog, a, out), live_in(prog, b, out));
            la.iter().zip(&lb).map(|(&x, &y)| x || y).collect()
        }
        Shape::Seq(a, b) => live_in(prog, a, &live_in(prog, b, out)),
        Shape::Star(body) => head_live(prog, body, out),
    }
}

/// Least fixpoint of `X = out ∪ live_in(body, X)`.
pub(crate) fn head_live(prog: &CompiledProgram, body: &Shape, out: &[bool]) -> Vec<bool> {
    let mut x = out.to_vec();
    loop {
        let next: Vec<bool> = live_in(prog, body, &x)
            .iter()
            .zip(out)
            .map(|(&a, &b)| a || b)
            .collect();
        if next == x {
            return x;
        }
        x = next;
    }
}

/// Merge-key layout at the head of a loop in tail position, where `goal`
/// marks the slots read by the property checked at final states.
pub(crate) fn key_layout(prog: &CompiledProgram, body: &Shape, goal: &[bool]) -> Vec<KeySlot> {
    let live = head_live(prog, body, goal);
    let w = written(prog, goal.len());
    live.iter()
        .zip(&w)
        .map(|(&l, &w)| match (l, w) {
            (false, _) => KeySlot::Dead,
            (true, false) => KeySlot::Exact,
            (true, true) => KeySlot::Cell,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::Signature;
    use crate::syntax::parse_program;

    #[test]
    fn scratch_variables_are_dead() {
        let sig = Signature::new(
            vec!["c".into()],
            vec!["k".into(), "d".into(), "u".into(), "z".into()],
        );
        let p = parse_program("{d:=c*k; u:=*; {k'=u-d & k>=0}}*").unwrap();
        let prog = CompiledProgram::compile(&p, &sig, &|_| None).unwrap();
        let Shape::Star(body) = &prog.shape else {
            panic!()
        };
        let mut goal = vec![false; 5];
        goal[1] = true;
        let key = key_layout(&prog, body, &goal);
        assert_eq!(
            key,
            [
                KeySlot::Exact,
                KeySlot::Cell,
                KeySlot::Dead,
                KeySlot::Dead,
                KeySlot::Dead
            ]
        );
    }
}
