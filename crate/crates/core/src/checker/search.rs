//! Level-by-level exploration of loop iterations with depth-first search
//! inside each iteration.
//!
//! Level `i` holds the states reaching the head of a tail loop after `i`
//! iterations. Items of a level are explored in parallel and their results
//! combined in item order, so the outcome does not depend on scheduling.

use std::collections::HashSet;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::liveness::{key_layout, KeySlot};
use super::{initial_states, CheckError, CheckOptions, Stats};
use crate::semantics::flow::{sample_indices, FlowRun};
use crate::semantics::program::grid_points;
use crate::semantics::{
    Atom, AtomKind, CompiledModel, CompiledOde, Event, FlowConfig, Pred, SemanticsError, Shape,
    State, Trace, Trajectory, Workspace,
};
use crate::syntax::{Formula, Program};

#[derive(Clone, Copy)]
pub(crate) enum Goal<'a> {
    /// Final states violating the formula.
    Violate(&'a Pred),
    /// Final states satisfying it.
    Reach(&'a Pred),
}

impl Goal<'_> {
    fn pred(&self) -> &Pred {
        match self {
            Goal::Violate(p) | Goal::Reach(p) => p,
        }
    }

    fn hit(&self, x: &[f64]) -> Result<bool, SemanticsError> {
        Ok(match self {
            Goal::Violate(p) => !p.eval(x)?,
            Goal::Reach(p) => p.eval(x)?,
        })
    }
}

pub(crate) struct Outcome {
    pub stats: Stats,
    pub trace: Option<Trace>,
}

/// How a state was reached; shared by all its descendants.
enum Link {
    Root(State),
    Discrete {
        parent: Arc<Link>,
        atom: usize,
        post: State,
    },
    Flow {
        parent: Arc<Link>,
        atom: usize,
        start: State,
        run: FlowRun,
        stop: usize,
    },
}

#[derive(Clone, Copy)]
enum Frame<'a> {
    Run(&'a Shape),
    /// Head of loop `star` after `count` iterations of `body`.
    Back {
        star: usize,
        body: &'a Shape,
        count: usize,
    },
}

struct Cont<'a> {
    frame: Frame<'a>,
    next: Option<&'a Cont<'a>>,
}

#[derive(Clone, Copy)]
enum Start {
    Root,
    Loop { star: usize, count: usize },
}

struct Item {
    state: State,
    link: Arc<Link>,
    start: Start,
}

enum Stop {
    Hit(Arc<Link>),
    Error(SemanticsError, Arc<Link>),
    Cancelled,
}

struct Shared<'a> {
    m: &'a CompiledModel,
    opts: &'a CheckOptions,
    goal: Goal<'a>,
    cfg: FlowConfig,
    /// Loops, by pre-order position in the shape.
    stars: Vec<&'a Shape>,
    /// Per atom: the evolution domain implies the safety formula, so points
    /// inside the flow need no separate check.
    guarded: Vec<bool>,
    cancel: AtomicUsize,
}

struct Worker<'s, 'a> {
    sh: &'s Shared<'a>,
    index: usize,
    ws: Workspace,
    traj: Trajectory,
    stats: Stats,
    emitted: Vec<Item>,
}

struct ItemResult {
    stats: Stats,
    emitted: Vec<Item>,
    stop: Option<Stop>,
}

fn collect_stars<'a>(s: &'a Shape, out: &mut Vec<&'a Shape>) {
    match s {
        Shape::Atom(_) => {}
        Shape::Choice(a, b) | Shape::Seq(a, b) => {
            collect_stars(a, out);
            collect_stars(b, out);
        }
        Shape::Star(a) => {
            out.push(s);
            collect_stars(a, out);
        }
    }
}

fn conjuncts<'f>(f: &'f Formula, out: &mut Vec<&'f Formula>) {
    match f {
        Formula::And(a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        Formula::True => {}
        _ => out.push(f),
    }
}

/// Every conjunct of `safety` is literally a conjunct of `domain`.
fn domain_implies(domain: &Formula, safety: &Formula) -> bool {
    let (mut d, mut s) = (Vec::new(), Vec::new());
    conjuncts(domain, &mut d);
    conjuncts(safety, &mut s);
    s.iter().all(|c| d.contains(c))
}

fn nullable(s: &Shape) -> bool {
    match s {
        Shape::Atom(_) => false,
        Shape::Choice(a, b) => nullable(a) || nullable(b),
        Shape::Seq(a, b) => nullable(a) && nullable(b),
        Shape::Star(_) => true,
    }
}

/// The rest of the run may be empty.
fn cont_nullable(mut k: Option<&Cont>) -> bool {
    while let Some(c) = k {
        if let Frame::Run(s) = c.frame {
            if !nullable(s) {
                return false;
            }
        }
        k = c.next;
    }
    true
}

fn fnv(seed: u64, words: impl Iterator<Item = u64>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl<'s, 'a> Worker<'s, 'a> {
    fn go(&mut self, s: State, link: Arc<Link>, k: Option<&Cont<'_>>) -> Result<(), Stop> {
        if self.sh.cancel.load(Ordering::Relaxed) < self.index {
            return Err(Stop::Cancelled);
        }
        let Some(c) = k else {
            return self.final_state(&s, link);
        };
        match c.frame {
            Frame::Run(Shape::Atom(i)) => self.atom(*i, s, link, c.next),
            Frame::Run(Shape::Choice(a, b)) => {
                self.go(
                    s.clone(),
                    link.clone(),
                    Some(&Cont {
                        frame: Frame::Run(a),
                        next: c.next,
                    }),
                )?;
                self.go(
                    s,
                    link,
                    Some(&Cont {
                        frame: Frame::Run(b),
                        next: c.next,
                    }),
                )
            }
            Frame::Run(Shape::Seq(a, b)) => {
                let kb = Cont {
                    frame: Frame::Run(b),
                    next: c.next,
                };
                self.go(
                    s,
                    link,
                    Some(&Cont {
                        frame: Frame::Run(a),
                        next: Some(&kb),
                    }),
                )
            }
            Frame::Run(star @ Shape::Star(body)) => {
                let id = self
                    .sh
                    .stars
                    .iter()
                    .position(|x| std::ptr::eq(*x, star))
                    .expect("star is indexed");
                self.loop_head(id, body, 0, s, link, c.next)
            }
            Frame::Back { star, body, count } => self.loop_head(star, body, count, s, link, c.next),
        }
    }

    fn loop_head(
        &mut self,
        star: usize,
        body: &Shape,
        count: usize,
        s: State,
        link: Arc<Link>,
        next: Option<&Cont<'_>>,
    ) -> Result<(), Stop> {
        let more = count < self.sh.opts.loop_bound;
        if next.is_none() {
            self.final_state(&s, link.clone())?;
            if more {
                self.emitted.push(Item {
                    state: s,
                    link,
                    start: Start::Loop { star, count },
                });
            }
            return Ok(());
        }
        self.go(s.clone(), link.clone(), next)?;
        if more {
            let back = Cont {
                frame: Frame::Back {
                    star,
                    body,
                    count: count + 1,
                },
                next,
            };
            self.go(
                s,
                link,
                Some(&Cont {
                    frame: Frame::Run(body),
                    next: Some(&back),
                }),
            )?;
        }
        Ok(())
    }

    fn final_state(&mut self, s: &State, link: Arc<Link>) -> Result<(), Stop> {
        match self.sh.goal.hit(s.values()) {
            Ok(true) => Err(Stop::Hit(link)),
            Ok(false) => Ok(()),
            Err(e) => Err(Stop::Error(e, link)),
        }
    }

    fn atom(
        &mut self,
        i: usize,
        s: State,
        link: Arc<Link>,
        next: Option<&Cont<'_>>,
    ) -> Result<(), Stop> {
        let atom = &self.sh.m.program.atoms[i];
        if let AtomKind::Ode(ode) = &atom.kind {
            return self.flow(i, ode, s, link, next);
        }
        let posts = match self.discrete(atom, &s) {
            Ok(p) => p,
            Err(e) => return Err(Stop::Error(e, link)),
        };
        for post in posts {
            self.stats.states_explored += 1;
            let l = Arc::new(Link::Discrete {
                parent: link.clone(),
                atom: i,
                post: post.clone(),
            });
            self.go(post, l, next)?;
        }
        Ok(())
    }

    fn discrete(&self, atom: &Atom, s: &State) -> Result<Vec<State>, SemanticsError> {
        let opts = self.sh.opts;
        match &atom.kind {
            AtomKind::Random {
                slot,
                range: Some(range),
            } if opts.jitter && opts.grid_points > 2 => {
                let x = s.values();
                let Some((lo, hi)) = range.sampling_bounds(x)? else {
                    return Ok(Vec::new());
                };
                let mut pts = grid_points(lo, hi, opts.grid_points);
                let spacing = (hi - lo) / (opts.grid_points - 1) as f64;
                let seed = fnv(
                    opts.seed,
                    std::iter::once(atom.id as u64).chain(x.iter().map(|v| v.to_bits())),
                );
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = pts.len();
                for p in &mut pts[1..n - 1] {
                    *p += (rng.gen::<f64>() - 0.5) * 0.5 * spacing;
                }
                Ok(pts
                    .into_iter()
                    .map(|v| {
                        let mut values = x.to_vec();
                        values[*slot] = v;
                        s.with_values(values)
                    })
                    .collect())
            }
            _ => self.sh.m.step_atom(atom, s, opts.grid_points),
        }
    }

    fn flow(
        &mut self,
        i: usize,
        ode: &CompiledOde,
        s: State,
        link: Arc<Link>,
        next: Option<&Cont<'_>>,
    ) -> Result<(), Stop> {
        let check_points = cont_nullable(next)
            && !(matches!(self.sh.goal, Goal::Violate(_)) && self.sh.guarded[i]);
        let goal = self.sh.goal;
        let mut hit: Option<Result<usize, SemanticsError>> = None;
        let res =
            self.traj
                .record_with(ode, s.values(), &self.sh.cfg, &mut self.ws, |idx, _, x| {
                    if !check_points {
                        return ControlFlow::Continue(());
                    }
                    match goal.hit(x) {
                        Ok(false) => ControlFlow::Continue(()),
                        Ok(true) => {
                            hit = Some(Ok(idx));
                            ControlFlow::Break(())
                        }
                        Err(e) => {
                            hit = Some(Err(e));
                            ControlFlow::Break(())
                        }
                    }
                });
        let run = match res {
            Ok(Some(run)) => run,
            Ok(None) => return Ok(()),
            Err(e) => return Err(Stop::Error(e.into(), link)),
        };
        self.stats.flows_integrated += 1;
        self.stats.integration_steps += run.last_index();
        let flow_link = |stop: usize| {
            Arc::new(Link::Flow {
                parent: link.clone(),
                atom: i,
                start: s.clone(),
                run,
                stop,
            })
        };
        match hit {
            Some(Ok(idx)) => {
                self.stats.states_explored += 1;
                return Err(Stop::Hit(flow_link(idx)));
            }
            Some(Err(e)) => {
                let last = self.traj.len().saturating_sub(1);
                return Err(Stop::Error(e, flow_link(last)));
            }
            None => {}
        }
        let picks = sample_indices(run.last_index(), self.sh.opts.duration_samples);
        let posts: Vec<(usize, State)> = picks
            .iter()
            .map(|&j| (j, self.traj.state_at(ode, &s, j)))
            .collect();
        for (j, post) in posts {
            self.stats.states_explored += 1;
            self.go(post, flow_link(j), next)?;
        }
        Ok(())
    }
}

fn run_item(sh: &Shared<'_>, index: usize, item: &Item) -> ItemResult {
    let mut w = Worker {
        sh,
        index,
        ws: Workspace::default(),
        traj: Trajectory::default(),
        stats: Stats::default(),
        emitted: Vec::new(),
    };
    if sh.cancel.load(Ordering::Relaxed) < index {
        return ItemResult {
            stats: w.stats,
            emitted: Vec::new(),
            stop: Some(Stop::Cancelled),
        };
    }
    let r = match item.start {
        Start::Root => w.go(
            item.state.clone(),
            item.link.clone(),
            Some(&Cont {
                frame: Frame::Run(&sh.m.program.shape),
                next: None,
            }),
        ),
        Start::Loop { star, count } => {
            let Shape::Star(body) = sh.stars[star] else {
                unreachable!()
            };
            let back = Cont {
                frame: Frame::Back {
                    star,
                    body,
                    count: count + 1,
                },
                next: None,
            };
            w.go(
                item.state.clone(),
                item.link.clone(),
                Some(&Cont {
                    frame: Frame::Run(body),
                    next: Some(&back),
                }),
            )
        }
    };
    let stop = r.err();
    if matches!(stop, Some(Stop::Hit(_) | Stop::Error(..))) {
        sh.cancel.fetch_min(index, Ordering::Relaxed);
    }
    ItemResult {
        stats: w.stats,
        emitted: w.emitted,
        stop,
    }
}

pub(crate) fn run(
    m: &CompiledModel,
    opts: &CheckOptions,
    goal: Goal<'_>,
) -> Result<Outcome, CheckError> {
    let init = initial_states(m, opts.init_samples).map_err(CheckError::Init)?;
    let mut stats = Stats {
        initial_states: init.len(),
        states_explored: init.len(),
        ..Stats::default()
    };

    let mut stars = Vec::new();
    collect_stars(&m.program.shape, &mut stars);
    let guarded = m
        .program
        .atoms
        .iter()
        .map(|a| match &a.ast {
            Program::Ode(ode) => domain_implies(&ode.domain, &m.model.safety),
            _ => false,
        })
        .collect();
    let mut goal_reads = vec![false; m.sig.len()];
    goal.pred().mark_reads(&mut goal_reads);
    let layouts: Vec<Vec<KeySlot>> = stars
        .iter()
        .map(|s| {
            let Shape::Star(body) = s else { unreachable!() };
            key_layout(&m.program, body, &goal_reads)
        })
        .collect();

    let sh = Shared {
        m,
        opts,
        goal,
        cfg: FlowConfig {
            step: opts.step,
            horizon: opts.horizon,
            event_tol: opts.event_tol,
        },
        stars,
        guarded,
        cancel: AtomicUsize::new(usize::MAX),
    };

    let mut items: Vec<Item> = init
        .into_iter()
        .map(|s| Item {
            link: Arc::new(Link::Root(s.clone())),
            state: s,
            start: Start::Root,
        })
        .collect();
    let mut seen: HashSet<(usize, Vec<i64>)> = HashSet::new();

    while !items.is_empty() {
        sh.cancel.store(usize::MAX, Ordering::Relaxed);
        let results: Vec<ItemResult> = items
            .par_iter()
            .enumerate()
            .map(|(i, it)| run_item(&sh, i, it))
            .collect();
        let mut next = Vec::new();
        for r in results {
            stats += r.stats;
            match r.stop {
                Some(Stop::Hit(link)) => {
                    return Ok(Outcome {
                        stats,
                        trace: Some(materialize(m, &sh.cfg, opts, &link)),
                    })
                }
                Some(Stop::Error(source, link)) => {
                    return Err(CheckError::Semantics {
                        source,
                        trace: Box::new(materialize(m, &sh.cfg, opts, &link)),
                    })
                }
                Some(Stop::Cancelled) => {
                    unreachable!("items are only cancelled after an earlier stop")
                }
                None => next.extend(r.emitted),
            }
        }
        if opts.merge_cell > 0.0 {
            let q = opts.merge_cell;
            next.retain(|it| {
                let Start::Loop { star, .. } = it.start else {
                    return true;
                };
                let key: Vec<i64> = layouts[star]
                    .iter()
                    .zip(it.state.values())
                    .filter_map(|(k, &v)| match k {
                        KeySlot::Dead => None,
                        KeySlot::Exact => Some(v.to_bits() as i64),
                        KeySlot::Cell => Some((v / q).floor() as i64),
                    })
                    .collect();
                let fresh = seen.insert((star, key));
                if !fresh {
                    stats.states_merged += 1;
                }
                fresh
            });
        }
        items = next;
    }
    Ok(Outcome { stats, trace: None })
}

/// Rebuilds the events along `link`, re-integrating flows to recover their
/// sample points.
fn materialize(
    m: &CompiledModel,
    cfg: &FlowConfig,
    opts: &CheckOptions,
    link: &Arc<Link>,
) -> Trace {
    let mut chain = Vec::new();
    let mut cur = link;
    let initial = loop {
        match &**cur {
            Link::Root(s) => break s.clone(),
            Link::Discrete { parent, .. } | Link::Flow { parent, .. } => {
                chain.push(cur);
                cur = parent;
            }
        }
    };
    let mut events = Vec::new();
    let mut pre = initial.clone();
    let mut ws = Workspace::default();
    let mut traj = Trajectory::default();
    for l in chain.into_iter().rev() {
        match &**l {
            Link::Discrete { atom, post, .. } => {
                let a = &m.program.atoms[*atom];
                events.push(Event::Discrete {
                    node: a.id,
                    label: a.label.to_string(),
                    pre: pre.to_valuation(),
                    post: post.to_valuation(),
                });
                pre = post.clone();
            }
            Link::Flow {
                atom,
                start,
                run,
                stop,
                ..
            } => {
                let a = &m.program.atoms[*atom];
                let AtomKind::Ode(ode) = &a.kind else {
                    unreachable!("flow links point at ODE atoms")
                };
                let stop = *stop;
                let ok = traj.record_with(ode, start.values(), cfg, &mut ws, |i, _, _| {
                    if i >= stop {
                        ControlFlow::Break(())
                    } else {
                        ControlFlow::Continue(())
                    }
                });
                // A flow that failed to evaluate ends the trace before it.
                if !matches!(ok, Ok(Some(_))) || traj.len() <= stop {
                    break;
                }
                let picks = sample_indices(run.last_index(), opts.duration_samples);
                let seg = traj.segment(ode, start, run, stop, &picks, &m.sig);
                pre = traj.state_at(ode, start, stop);
                events.push(Event::Flow {
                    node: a.id,
                    label: a.label.to_string(),
                    flow: seg,
                });
            }
            Link::Root(_) => unreachable!(),
        }
    }
    Trace::new(initial.to_valuation(), events)
}
