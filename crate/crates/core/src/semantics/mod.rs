//! Numeric transition semantics: valuation of terms and formulas, discrete
//! steps, and ODE flows.

pub mod expr;
pub mod flow;
pub mod program;
pub mod state;
pub mod trace;

use std::ops::ControlFlow;
use std::sync::Arc;

use thiserror::Error;

pub use expr::{eval_formula, eval_term, CompiledTerm, EvalError, Expr, Pred};
pub use flow::{FlowConfig, FlowEnd, FlowError, FlowRun, Workspace};
pub use program::{Atom, AtomKind, CompiledOde, CompiledProgram, RangeSpec, Shape, BOUND_SHIFT};
pub use state::{Signature, State, Valuation};
pub use trace::{Event, FlowSample, FlowSegment, Trace, TRACE_VERSION};

use crate::syntax::{ModelFile, OdeSystem, Program};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("`{0}:=*` has no declared range")]
    NoRange(String),
    #[error("{0}")]
    Unsupported(String),
}

/// A model bound to its signature: every term, formula and program compiled.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub model: ModelFile,
    pub sig: Arc<Signature>,
    pub program: CompiledProgram,
    pub safety: Pred,
    pub assume: Pred,
    /// Per slot: declared value, if any.
    pub values: Vec<Option<CompiledTerm>>,
    /// Per slot: declared range, if any.
    pub ranges: Vec<Option<RangeSpec>>,
}

impl CompiledModel {
    pub fn new(model: &ModelFile) -> Result<Self, SemanticsError> {
        let sig = Arc::new(Signature::new(
            model.constant_names().map(str::to_string).collect(),
            model.variable_names().map(str::to_string).collect(),
        ));
        let decls: Vec<_> = model.constants.iter().chain(&model.variables).collect();
        let values = decls
            .iter()
            .map(|d| {
                d.value
                    .as_ref()
                    .map(|t| CompiledTerm::compile(t, &sig))
                    .transpose()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ranges = decls
            .iter()
            .map(|d| {
                d.range
                    .as_ref()
                    .map(|r| RangeSpec::compile(r, &sig))
                    .transpose()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let program = CompiledProgram::compile(&model.program, &sig, &|slot| ranges[slot].clone())?;
        let safety = Pred::compile(&model.safety, &sig).map_err(|_| {
            SemanticsError::Unsupported(
                "safety formulas must be quantifier- and modality-free".into(),
            )
        })?;
        let assume = Pred::compile(&model.assume, &sig).map_err(|_| {
            SemanticsError::Unsupported("assumptions must be quantifier- and modality-free".into())
        })?;
        Ok(Self {
            model: model.clone(),
            sig,
            program,
            safety,
            assume,
            values,
            ranges,
        })
    }

    pub fn state(&self, values: Vec<f64>) -> State {
        State::new(self.sig.clone(), values)
    }

    /// Names of the state variables (constants excluded).
    pub fn variable_names(&self) -> Vec<String> {
        self.sig
            .variable_slots()
            .map(|i| self.sig.name(i).to_string())
            .collect()
    }

    /// Successors of one discrete atom. ODE atoms are rejected.
    pub fn step_atom(
        &self,
        atom: &Atom,
        s: &State,
        grid_points: usize,
    ) -> Result<Vec<State>, SemanticsError> {
        step_discrete(atom, s, grid_points, &self.sig)
    }

    /// All discrete runs of `p` from `s`, in syntactic order. `p` is compiled
    /// against this model's signature and ranges; loops and ODEs are
    /// rejected.
    pub fn successors_discrete(
        &self,
        s: &State,
        p: &Program,
        grid_points: usize,
    ) -> Result<Vec<(State, Vec<Event>)>, SemanticsError> {
        let prog = CompiledProgram::compile(p, &self.sig, &|slot| self.ranges[slot].clone())?;
        let mut out = Vec::new();
        discrete_runs(
            &prog,
            &prog.shape,
            s,
            Vec::new(),
            grid_points,
            &self.sig,
            &mut out,
        )?;
        Ok(out)
    }

    /// Flows of `ode` from `s` stopped at `duration_samples` evenly spaced
    /// accepted points (the last one being the horizon or the domain exit).
    /// Empty when `s` violates the evolution domain.
    pub fn integrate_flow(
        &self,
        s: &State,
        ode: &OdeSystem,
        cfg: &FlowConfig,
        duration_samples: usize,
    ) -> Result<Vec<FlowSegment>, SemanticsError> {
        let ode = CompiledOde::compile(ode, &self.sig)?;
        let mut traj = Trajectory::new(ode.slots.len());
        let Some(run) = traj.record(&ode, s.values(), cfg, &mut Workspace::default())? else {
            return Ok(Vec::new());
        };
        let picks = flow::sample_indices(run.last_index(), duration_samples);
        Ok(picks
            .iter()
            .map(|&j| traj.segment(&ode, s, &run, j, &picks, &self.sig))
            .collect())
    }
}

fn step_discrete(
    atom: &Atom,
    s: &State,
    grid_points: usize,
    sig: &Signature,
) -> Result<Vec<State>, SemanticsError> {
    let x = s.values();
    match &atom.kind {
        AtomKind::Jump(eqs) => {
            let new: Vec<f64> = eqs
                .iter()
                .map(|(_, t)| t.eval(x))
                .collect::<Result<_, _>>()?;
            let mut values = x.to_vec();
            for ((slot, _), v) in eqs.iter().zip(new) {
                values[*slot] = v;
            }
            Ok(vec![s.with_values(values)])
        }
        AtomKind::Test(p) => Ok(if p.eval(x)? {
            vec![s.clone()]
        } else {
            Vec::new()
        }),
        AtomKind::Random { slot, range } => {
            let range = range
                .as_ref()
                .ok_or_else(|| SemanticsError::NoRange(sig.name(*slot).to_string()))?;
            Ok(range
                .grid(x, grid_points)?
                .into_iter()
                .map(|v| {
                    let mut values = x.to_vec();
                    values[*slot] = v;
                    s.with_values(values)
                })
                .collect())
        }
        AtomKind::Ode(_) => Err(SemanticsError::Unsupported(format!(
            "`{}` is continuous; integrate it instead",
            atom.label
        ))),
    }
}

fn discrete_runs(
    prog: &CompiledProgram,
    shape: &Shape,
    s: &State,
    events: Vec<Event>,
    grid: usize,
    sig: &Signature,
    out: &mut Vec<(State, Vec<Event>)>,
) -> Result<(), SemanticsError> {
    match shape {
        Shape::Atom(i) => {
            let atom = &prog.atoms[*i];
            for post in step_discrete(atom, s, grid, sig)? {
                let mut ev = events.clone();
                ev.push(Event::Discrete {
                    node: atom.id,
                    label: atom.label.to_string(),
                    pre: s.to_valuation(),
                    post: post.to_valuation(),
                });
                out.push((post, ev));
            }
        }
        Shape::Choice(a, b) => {
            discrete_runs(prog, a, s, events.clone(), grid, sig, out)?;
            discrete_runs(prog, b, s, events, grid, sig, out)?;
        }
        Shape::Seq(a, b) => {
            let mut mid = Vec::new();
            discrete_runs(prog, a, s, events, grid, sig, &mut mid)?;
            for (m, ev) in mid {
                discrete_runs(prog, b, &m, ev, grid, sig, out)?;
            }
        }
        Shape::Star(_) => {
            return Err(SemanticsError::Unsupported(
                "loops are unrolled by the checker, not by discrete successors".into(),
            ))
        }
    }
    Ok(())
}

/// Values of the evolving variables at every accepted point of a flow.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Integrates and records every accepted point.
    pub fn record(
        &mut self,
        ode: &CompiledOde,
        x0: &[f64],
        cfg: &FlowConfig,
        ws: &mut Workspace,
    ) -> Result<Option<FlowRun>, FlowError> {
        self.record_with(ode, x0, cfg, ws, |_, _, _| ControlFlow::Continue(()))
    }

    /// Like [`record`](Self::record) with an extra visitor per point.
    pub fn record_with(
        &mut self,
        ode: &CompiledOde,
        x0: &[f64],
        cfg: &FlowConfig,
        ws: &mut Workspace,
        mut visit: impl FnMut(usize, f64, &[f64]) -> ControlFlow<()>,
    ) -> Result<Option<FlowRun>, FlowError> {
        self.dim = ode.slots.len();
        self.data.clear();
        let data = &mut self.data;
        flow::integrate(ode, x0, cfg, ws, |i, t, x| {
            data.extend(ode.slots.iter().map(|&s| x[s]));
            visit(i, t, x)
        })
    }

    /// Full state at point `i` of a flow that started in `start`.
    pub fn state_at(&self, ode: &CompiledOde, start: &State, i: usize) -> State {
        let mut values = start.values().to_vec();
        for (&s, &v) in ode.slots.iter().zip(self.point(i)) {
            values[s] = v;
        }
        start.with_values(values)
    }

    /// The flow from `start` cut off at point `stop`, keeping the picked
    /// sample points before it.
    pub fn segment(
        &self,
        ode: &CompiledOde,
        start: &State,
        run: &FlowRun,
        stop: usize,
        picks: &[usize],
        sig: &Signature,
    ) -> FlowSegment {
        let cut = run.prefix(stop);
        let samples = picks
            .iter()
            .copied()
            .filter(|&i| i < stop)
            .chain(std::iter::once(stop))
            .map(|i| FlowSample {
                index: i,
                t: run.time_of(i),
                values: self.point(i).to_vec(),
            })
            .collect();
        FlowSegment {
            step: cut.step,
            full_steps: cut.full_steps,
            tail_step: cut.tail_step,
            duration: cut.duration(),
            start: start.to_valuation(),
            end: self.state_at(ode, start, stop).to_valuation(),
            sample_vars: ode.slots.iter().map(|&s| sig.name(s).to_string()).collect(),
            samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_model, parse_program};

    const MODEL: &str = "\
constants:
  kc1 = 0.5
  C1 = 0.5
variables:
  x = 1
  y = 2
  k1 = 0.7
  d = 0
  u = 0 in [0, 1]
program:
  x:=y, y:=x
safety:
  true
";

    fn model() -> CompiledModel {
        CompiledModel::new(&parse_model(MODEL).unwrap()).unwrap()
    }

    fn initial(m: &CompiledModel) -> State {
        m.state(vec![0.5, 0.5, 1.0, 2.0, 0.7, 0.0, 0.0])
    }

    #[test]
    fn simultaneous_swap() {
        let m = model();
        let s = initial(&m);
        let out = m
            .successors_discrete(&s, &parse_program("x:=y, y:=x").unwrap(), 9)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            (out[0].0.get("x"), out[0].0.get("y")),
            (Some(2.0), Some(1.0))
        );
    }

    #[test]
    fn guarded_choice_takes_one_branch() {
        let m = model();
        let p = parse_program("?(k1<kc1); d:=k1 ++ ?(k1>=kc1); d:=C1").unwrap();
        let out = m.successors_discrete(&initial(&m), &p, 9).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0.get("d"), Some(0.5));
        assert_eq!(out[0].1.len(), 2);
        let blocked = m
            .successors_discrete(&initial(&m), &parse_program("?(false)").unwrap(), 9)
            .unwrap();
        assert!(blocked.is_empty());
    }

    #[test]
    fn random_assign_uses_grid_and_keeps_frame() {
        let m = model();
        let s = initial(&m);
        let out = m
            .successors_discrete(&s, &parse_program("u:=*").unwrap(), 5)
            .unwrap();
        let us: Vec<f64> = out.iter().map(|(t, _)| t.get("u").unwrap()).collect();
        assert_eq!(us, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        for (t, _) in &out {
            for name in ["kc1", "C1", "x", "y", "k1", "d"] {
                assert_eq!(
                    t.get(name).unwrap().to_bits(),
                    s.get(name).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn loops_and_odes_are_not_discrete() {
        let m = model();
        let s = initial(&m);
        assert!(m
            .successors_discrete(&s, &parse_program("{x:=1}*").unwrap(), 3)
            .is_err());
        assert!(m
            .successors_discrete(&s, &parse_program("{x'=1}").unwrap(), 3)
            .is_err());
    }

    #[test]
    fn zero_field_flows_keep_state() {
        let m = model();
        let s = initial(&m);
        let Program::Ode(ode) = parse_program("{x'=0, y'=0 & x>=0}").unwrap() else {
            panic!()
        };
        let segs = m
            .integrate_flow(&s, &ode, &FlowConfig::default(), 8)
            .unwrap();
        assert_eq!(segs.len(), 8);
        assert!(segs.iter().all(|g| g.end == s.to_valuation()));
        assert!(segs.windows(2).all(|w| w[0].duration < w[1].duration));
    }

    #[test]
    fn linear_decay_stops_at_zero() {
        // k2(t) = k2(0) - (g2/L2) t reaches zero at t = 0.3 / 0.5.
        let src = "\
constants:
  L2 = 1
variables:
  k2 = 0.3
  g2 = 0.5
program:
  {k2'=(0-g2)/L2 & k2>=0}
safety:
  k2 >= 0
";
        let m = CompiledModel::new(&parse_model(src).unwrap()).unwrap();
        let s = m.state(vec![1.0, 0.3, 0.5]);
        let Program::Ode(ode) = &m.model.program else {
            panic!()
        };
        let cfg = FlowConfig {
            horizon: 5.0,
            ..FlowConfig::default()
        };
        let segs = m.integrate_flow(&s, ode, &cfg, 8).unwrap();
        let last = segs.last().unwrap();
        assert!((last.duration - 0.6).abs() <= 1e-9, "{}", last.duration);
        let k2 = last.end.get("k2").unwrap();
        assert!((0.0..=1e-9).contains(&k2));
        for g in &segs {
            for smp in &g.samples {
                assert!(smp.values[0] >= 0.0);
                assert!((smp.values[0] - (0.3 - 0.5 * smp.t)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn flow_from_outside_domain_is_empty() {
        let m = model();
        let Program::Ode(ode) = parse_program("{x'=1 & x<0}").unwrap() else {
            panic!()
        };
        assert!(m
            .integrate_flow(&initial(&m), &ode, &FlowConfig::default(), 8)
            .unwrap()
            .is_empty());
    }
}
