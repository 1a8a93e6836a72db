//! One deterministic run of a model with every choice fixed up front.
//!
//! Pins fix the value of a variable: `x:=*` takes the pinned value and an
//! assignment producing a different value rules its branch out. Choices are
//! resolved left to right, taking the first branch that completes; loops
//! run exactly `loop_bound` times; flows run to the horizon or the
//! domain exit.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use thiserror::Error;

use crate::semantics::flow::sample_indices;
use crate::semantics::{
    AtomKind, CompiledModel, Event, FlowConfig, SemanticsError, Shape, State, Trace, Trajectory,
    Workspace,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Values for variables written by the program.
    pub pins: BTreeMap<String, f64>,
    /// Replacement values for constants.
    pub constants: BTreeMap<String, f64>,
    /// Initial values for variables; others start at their declared value
    /// or the midpoint of their range.
    pub init: BTreeMap<String, f64>,
    pub loop_bound: usize,
    pub step: f64,
    pub horizon: f64,
    pub event_tol: f64,
    /// Points kept per flow in the trace.
    pub flow_samples: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            pins: BTreeMap::new(),
            constants: BTreeMap::new(),
            init: BTreeMap::new(),
            loop_bound: 1,
            step: 1e-3,
            horizon: 1.0,
            event_tol: 1e-9,
            flow_samples: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("`{0}` is not declared")]
    Unknown(String),
    #[error("`{0}` is a variable; set its start value instead")]
    NotConstant(String),
    #[error("`{0}` is a constant; override it instead")]
    NotVariable(String),
    #[error("`{0}:=*` needs a fixed value")]
    Unpinned(String),
    #[error("{name} = {value} lies outside its declared range")]
    OutOfRange { name: String, value: f64 },
    #[error("{name} = {value} is not a finite number")]
    NonFinite { name: String, value: f64 },
    #[error("the initial state violates the model's assumption")]
    Assumption,
    #[error("no run of the program is compatible with the fixed choices")]
    Blocked,
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// The initial state used by [`simulate`].
pub fn initial_state(m: &CompiledModel, opts: &SimOptions) -> Result<State, SimError> {
    for (name, value) in opts.constants.iter().chain(&opts.init).chain(&opts.pins) {
        let slot = m
            .sig
            .slot(name)
            .ok_or_else(|| SimError::Unknown(name.clone()))?;
        if !value.is_finite() {
            return Err(SimError::NonFinite {
                name: name.clone(),
                value: *value,
            });
        }
        let constant = m.sig.is_constant(slot);
        if opts.constants.contains_key(name) && !constant {
            return Err(SimError::NotConstant(name.clone()));
        }
        if (opts.init.contains_key(name) || opts.pins.contains_key(name)) && constant {
            return Err(SimError::NotVariable(name.clone()));
        }
    }
    let n = m.sig.len();
    let mut x = vec![0.0; n];
    for slot in 0..n {
        let name = m.sig.name(slot);
        let given = opts
            .constants
            .get(name)
            .or_else(|| opts.init.get(name))
            .copied();
        x[slot] = match (given, &m.values[slot], &m.ranges[slot]) {
            (Some(v), _, Some(r)) if !r.contains(&x, v).map_err(SemanticsError::from)? => {
                return Err(SimError::OutOfRange {
                    name: name.to_string(),
                    value: v,
                })
            }
            (Some(v), _, _) => v,
            (None, Some(t), _) => t.eval(&x).map_err(SemanticsError::from)?,
            (None, None, Some(r)) => r
                .midpoint(&x)
                .map_err(SemanticsError::from)?
                .ok_or(SimError::Blocked)?,
            (None, None, None) => unreachable!("declarations carry a value or a range"),
        };
    }
    if !m.assume.eval(&x).map_err(SemanticsError::from)? {
        return Err(SimError::Assumption);
    }
    Ok(m.state(x))
}

/// Runs the model once and returns its trace.
pub fn simulate(m: &CompiledModel, opts: &SimOptions) -> Result<Trace, SimError> {
    let s0 = initial_state(m, opts)?;
    let pins: Vec<Option<f64>> = m
        .sig
        .names()
        .iter()
        .map(|n| opts.pins.get(n).copied())
        .collect();
    let mut sim = Sim {
        m,
        opts,
        pins,
        cfg: FlowConfig {
            step: opts.step,
            horizon: opts.horizon,
            event_tol: opts.event_tol,
        },
        ws: Workspace::default(),
        traj: Trajectory::default(),
        events: Vec::new(),
    };
    let root = Cont {
        frame: Frame::Run(&m.program.shape),
        next: None,
    };
    if sim.go(&s0, Some(&root))? {
        Ok(Trace::new(s0.to_valuation(), sim.events))
    } else {
        Err(SimError::Blocked)
    }
}

#[derive(Clone, Copy)]
enum Frame<'a> {
    Run(&'a Shape),
    Back { body: &'a Shape, count: usize },
}

struct Cont<'a> {
    frame: Frame<'a>,
    next: Option<&'a Cont<'a>>,
}

struct Sim<'m> {
    m: &'m CompiledModel,
    opts: &'m SimOptions,
    pins: Vec<Option<f64>>,
    cfg: FlowConfig,
    ws: Workspace,
    traj: Trajectory,
    events: Vec<Event>,
}

impl Sim<'_> {
    /// `true` once a complete run has been recorded in `events`.
    fn go(&mut self, s: &State, k: Option<&Cont<'_>>) -> Result<bool, SimError> {
        let Some(c) = k else { return Ok(true) };
        match c.frame {
            Frame::Run(Shape::Atom(i)) => self.atom(*i, s, c.next),
            Frame::Run(Shape::Choice(a, b)) => Ok(self.go(
                s,
                Some(&Cont {
                    frame: Frame::Run(a),
                    next: c.next,
                }),
            )? || self.go(
                s,
                Some(&Cont {
                    frame: Frame::Run(b),
                    next: c.next,
                }),
            )?),
            Frame::Run(Shape::Seq(a, b)) => {
                let kb = Cont {
                    frame: Frame::Run(b),
                    next: c.next,
                };
                self.go(
                    s,
                    Some(&Cont {
                        frame: Frame::Run(a),
                        next: Some(&kb),
                    }),
                )
            }
            Frame::Run(Shape::Star(body)) => self.head(body, 0, s, c.next),
            Frame::Back { body, count } => self.head(body, count, s, c.next),
        }
    }

    fn head(
        &mut self,
        body: &Shape,
        count: usize,
        s: &State,
        next: Option<&Cont<'_>>,
    ) -> Result<bool, SimError> {
        if count < self.opts.loop_bound {
            let back = Cont {
                frame: Frame::Back {
                    body,
                    count: count + 1,
                },
                next,
            };
            return self.go(
                s,
                Some(&Cont {
                    frame: Frame::Run(body),
                    next: Some(&back),
                }),
            );
        }
        self.go(s, next)
    }

    fn atom(&mut self, i: usize, s: &State, next: Option<&Cont<'_>>) -> Result<bool, SimError> {
        let atom = &self.m.program.atoms[i];
        let post = match &atom.kind {
            AtomKind::Random { slot, range } => {
                let name = self.m.sig.name(*slot);
                let v = self.pins[*slot].ok_or_else(|| SimError::Unpinned(name.to_string()))?;
                if let Some(r) = range {
                    if !r.contains(s.values(), v).map_err(SemanticsError::from)? {
                        return Err(SimError::OutOfRange {
                            name: name.to_string(),
                            value: v,
                        });
                    }
                }
                let mut x = s.values().to_vec();
                x[*slot] = v;
                Some(s.with_values(x))
            }
            AtomKind::Jump(eqs) => {
                let post = self.m.step_atom(atom, s, 1)?.pop();
                post.filter(|p| {
                    eqs.iter().all(|(slot, _)| {
                        self.pins[*slot].is_none_or(|v| v.to_bits() == p.value(*slot).to_bits())
                    })
                })
            }
            AtomKind::Test(_) => self.m.step_atom(atom, s, 1)?.pop(),
            AtomKind::Ode(ode) => {
                let run = self
                    .traj
                    .record_with(ode, s.values(), &self.cfg, &mut self.ws, |_, _, _| {
                        ControlFlow::Continue(())
                    })
                    .map_err(SemanticsError::from)?;
                let Some(run) = run else { return Ok(false) };
                let last = run.last_index();
                let picks = sample_indices(last, self.opts.flow_samples.max(2));
                let seg = self.traj.segment(ode, s, &run, last, &picks, &self.m.sig);
                let post = self.traj.state_at(ode, s, last);
                let mark = self.events.len();
                self.events.push(Event::Flow {
                    node: atom.id,
                    label: atom.label.to_string(),
                    flow: seg,
                });
                if self.go(&post, next)? {
                    return Ok(true);
                }
                self.events.truncate(mark);
                return Ok(false);
            }
        };
        let Some(post) = post else { return Ok(false) };
        let mark = self.events.len();
        self.events.push(Event::Discrete {
            node: atom.id,
            label: atom.label.to_string(),
            pre: s.to_valuation(),
            post: post.to_valuation(),
        });
        if self.go(&post, next)? {
            return Ok(true);
        }
        self.events.truncate(mark);
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;

    fn linear() -> CompiledModel {
        CompiledModel::new(&builtin("linear-signal").unwrap().parse().unwrap()).unwrap()
    }

    fn pins(p: &[(&str, f64)]) -> BTreeMap<String, f64> {
        p.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    #[test]
    fn red_light_drains_lane_two() {
        let m = linear();
        let opts = SimOptions {
            pins: pins(&[("pi", 0.0), ("f1", 0.0), ("g2", 0.2)]),
            ..SimOptions::default()
        };
        let t = simulate(&m, &opts).unwrap();
        assert!(t.is_consistent());
        assert_eq!(t.initial.get("k2"), Some(0.5));
        let k2 = t.final_state.get("k2").unwrap();
        assert!((k2 - 0.3).abs() < 1e-9, "{k2}");
        assert_eq!(t.final_state.get("k1"), t.initial.get("k1"));
    }

    #[test]
    fn missing_pin_is_reported() {
        let m = linear();
        let opts = SimOptions {
            pins: pins(&[("pi", 0.0), ("f1", 0.0)]),
            ..SimOptions::default()
        };
        assert_eq!(simulate(&m, &opts), Err(SimError::Unpinned("g2".into())));
    }

    #[test]
    fn bad_names_and_ranges() {
        let m = linear();
        let opts = SimOptions {
            constants: pins(&[("k1", 0.1)]),
            ..SimOptions::default()
        };
        assert_eq!(
            initial_state(&m, &opts),
            Err(SimError::NotConstant("k1".into()))
        );
        let opts = SimOptions {
            init: pins(&[("k1", 7.0)]),
            ..SimOptions::default()
        };
        assert!(matches!(
            initial_state(&m, &opts),
            Err(SimError::OutOfRange { .. })
        ));
        let opts = SimOptions {
            pins: pins(&[("zz", 1.0)]),
            ..SimOptions::default()
        };
        assert_eq!(
            initial_state(&m, &opts),
            Err(SimError::Unknown("zz".into()))
        );
        let opts = SimOptions {
            pins: pins(&[("pi", 0.5), ("f1", 0.0), ("g2", 0.0)]),
            ..SimOptions::default()
        };
        assert_eq!(simulate(&m, &opts), Err(SimError::Blocked));
    }
}
