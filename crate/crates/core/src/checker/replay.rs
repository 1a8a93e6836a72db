//! Independent re-execution of a trace against a model.

use thiserror::Error;

use crate::semantics::flow::{point_time, replay_run};
use crate::semantics::{
    AtomKind, CompiledModel, EvalError, Event, Pred, SemanticsError, State, Trace, TRACE_VERSION,
};
use crate::syntax::Formula;

/// What the trace is supposed to demonstrate about its final state.
#[derive(Debug, Clone, Copy)]
pub enum Claim<'a> {
    /// The model's safety formula is false.
    Violates,
    /// The formula is true.
    Reaches(&'a Formula),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("trace version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("trace does not match the model's variables: {0}")]
    Signature(String),
    #[error("target: {0}")]
    Target(EvalError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

impl From<EvalError> for ReplayError {
    fn from(e: EvalError) -> Self {
        ReplayError::Semantics(e.into())
    }
}

fn same(a: &State, b: &State) -> bool {
    a.values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Re-executes every step of `trace` and checks `claim` at its end.
///
/// `Ok(false)` means the trace is not a genuine run of the model or does not
/// establish the claim; `Err` is reserved for traces that cannot be read
/// against this model at all.
pub fn replay(m: &CompiledModel, trace: &Trace, claim: Claim<'_>) -> Result<bool, ReplayError> {
    if trace.version != TRACE_VERSION {
        return Err(ReplayError::Version {
            found: trace.version,
            expected: TRACE_VERSION,
        });
    }
    let read = |v, what: &str| {
        State::from_valuation(&m.sig, v)
            .ok_or_else(|| ReplayError::Signature(format!("{what} state")))
    };
    let initial = read(&trace.initial, "initial")?;
    let target = match claim {
        Claim::Violates => None,
        Claim::Reaches(f) => Some(Pred::compile(f, &m.sig).map_err(ReplayError::Target)?),
    };

    if !in_initial_region(m, &initial)? {
        return Ok(false);
    }

    let mut cur = initial;
    let mut path = Vec::with_capacity(trace.events.len());
    for e in &trace.events {
        let pre = read(e.pre(), "pre")?;
        let post = read(e.post(), "post")?;
        if !same(&pre, &cur) {
            return Ok(false);
        }
        let Some(atom) = m.program.atoms.get(e.node()) else {
            return Ok(false);
        };
        let ok = match (e, &atom.kind) {
            (Event::Discrete { label, .. }, kind) if **label == *atom.label => match kind {
                AtomKind::Jump(_) | AtomKind::Test(_) => {
                    m.step_atom(atom, &pre, 1)?.iter().any(|s| same(s, &post))
                }
                AtomKind::Random { slot, range } => {
                    let frame = (0..m.sig.len())
                        .all(|i| i == *slot || pre.value(i).to_bits() == post.value(i).to_bits());
                    let inside = match range {
                        Some(r) => r.contains(pre.values(), post.value(*slot))?,
                        None => false,
                    };
                    frame && inside
                }
                AtomKind::Ode(_) => false,
            },
            (Event::Flow { label, flow, .. }, AtomKind::Ode(ode)) if **label == *atom.label => {
                let names: Vec<&str> = ode.slots.iter().map(|&s| m.sig.name(s)).collect();
                let mut samples_ok = flow
                    .sample_vars
                    .iter()
                    .map(String::as_str)
                    .eq(names.iter().copied())
                    && flow.step.is_finite()
                    && flow.step > 0.0
                    && flow.tail_step.is_finite()
                    && flow.tail_step >= 0.0;
                if samples_ok {
                    let last = flow.full_steps + usize::from(flow.tail_step > 0.0);
                    let mut wanted = flow.samples.iter().peekable();
                    let res = replay_run(
                        ode,
                        pre.values(),
                        flow.step,
                        flow.full_steps,
                        flow.tail_step,
                        |i, x| {
                            while let Some(smp) = wanted.next_if(|s| s.index == i) {
                                let t = point_time(flow.step, flow.full_steps, flow.tail_step, i);
                                let vals = ode.slots.iter().map(|&s| x[s].to_bits());
                                samples_ok &= smp.t.to_bits() == t.to_bits()
                                    && smp.values.iter().map(|v| v.to_bits()).eq(vals);
                            }
                        },
                    )
                    .map_err(SemanticsError::from)?;
                    match res {
                        Some(x) => samples_ok &= same(&m.state(x), &post),
                        None => samples_ok = false,
                    }
                    samples_ok &= wanted.next().is_none()
                        && flow.samples.windows(2).all(|w| w[0].index < w[1].index)
                        && flow.duration.to_bits()
                            == point_time(flow.step, flow.full_steps, flow.tail_step, last)
                                .to_bits();
                }
                samples_ok
            }
            _ => false,
        };
        if !ok {
            return Ok(false);
        }
        path.push(atom.id);
        cur = post;
    }

    if !m.program.accepts(&path) || !same(&read(&trace.final_state, "final")?, &cur) {
        return Ok(false);
    }
    Ok(match target {
        None => !m.safety.eval(cur.values())?,
        Some(t) => t.eval(cur.values())?,
    })
}

fn in_initial_region(m: &CompiledModel, s: &State) -> Result<bool, ReplayError> {
    let x = s.values();
    for slot in 0..m.sig.len() {
        let ok = match (&m.values[slot], &m.ranges[slot]) {
            (Some(v), _) => v.eval(x)?.to_bits() == x[slot].to_bits(),
            (None, Some(r)) => r.contains(x, x[slot])?,
            (None, None) => false,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(m.assume.eval(x)?)
}
