//! Fixed-step RK4 integration with evolution-domain checks and bisection of
//! the exit time.

use std::ops::ControlFlow;

use thiserror::Error;

use super::expr::EvalError;
use super::program::CompiledOde;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub step: f64,
    pub horizon: f64,
    pub event_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 1.0,
            event_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("integration failed at t = {time}: {source}")]
pub struct FlowError {
    pub time: f64,
    #[source]
    pub source: EvalError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowEnd {
    Horizon,
    DomainExit,
    /// The visitor asked to stop.
    Stopped,
}

/// Shape of one integration: `full_steps` steps of size `step` followed by
/// an optional shorter step `tail_step` (zero when absent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRun {
    pub step: f64,
    pub full_steps: usize,
    pub tail_step: f64,
    pub end: FlowEnd,
}

impl FlowRun {
    /// Number of accepted points after the start.
    pub fn last_index(&self) -> usize {
        self.full_steps + usize::from(self.tail_step > 0.0)
    }

    pub fn time_of(&self, index: usize) -> f64 {
        point_time(self.step, self.full_steps, self.tail_step, index)
    }

    pub fn duration(&self) -> f64 {
        self.time_of(self.last_index())
    }

    /// The same run cut off at accepted point `index`.
    pub fn prefix(&self, index: usize) -> FlowRun {
        if index <= self.full_steps {
            FlowRun {
                step: self.step,
                full_steps: index,
                tail_step: 0.0,
                end: FlowEnd::Stopped,
            }
        } else {
            *self
        }
    }
}

pub fn point_time(step: f64, full_steps: usize, tail_step: f64, index: usize) -> f64 {
    if index <= full_steps {
        index as f64 * step
    } else {
        full_steps as f64 * step + tail_step
    }
}

/// Scratch space for RK4 stages, reusable across flows.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    trial: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, dim: usize, n: usize) {
        for k in &mut self.k {
            k.resize(dim, 0.0);
        }
        self.stage.resize(n, 0.0);
        self.trial.resize(n, 0.0);
    }
}

fn field(ode: &CompiledOde, x: &[f64], out: &mut [f64], t: f64) -> Result<(), FlowError> {
    for (o, r) in out.iter_mut().zip(&ode.rhs) {
        *o = r.eval(x).map_err(|source| FlowError { time: t, source })?;
    }
    Ok(())
}

/// One RK4 step of size `h` from `x` into `ws.trial`. With a constant field
/// the stages are all `k0`, and the same update formula is applied so the
/// result matches the general path bit for bit.
fn rk4_step(
    ode: &CompiledOde,
    x: &[f64],
    h: f64,
    t: f64,
    k0: &[f64],
    ws: &mut Workspace,
) -> Result<(), FlowError> {
    ws.trial.copy_from_slice(x);
    if ode.constant_field {
        for (j, &s) in ode.slots.iter().enumerate() {
            let k = k0[j];
            ws.trial[s] = x[s] + (h / 6.0) * (k + 2.0 * k + 2.0 * k + k);
        }
        return Ok(());
    }
    let [k1, k2, k3, k4] = &mut ws.k;
    field(ode, x, k1, t)?;
    ws.stage.copy_from_slice(x);
    for (j, &s) in ode.slots.iter().enumerate() {
        ws.stage[s] = x[s] + 0.5 * h * k1[j];
    }
    field(ode, &ws.stage, k2, t + 0.5 * h)?;
    for (j, &s) in ode.slots.iter().enumerate() {
        ws.stage[s] = x[s] + 0.5 * h * k2[j];
    }
    field(ode, &ws.stage, k3, t + 0.5 * h)?;
    for (j, &s) in ode.slots.iter().enumerate() {
        ws.stage[s] = x[s] + h * k3[j];
    }
    field(ode, &ws.stage, k4, t + h)?;
    for (j, &s) in ode.slots.iter().enumerate() {
        ws.trial[s] = x[s] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    Ok(())
}

fn in_domain(ode: &CompiledOde, x: &[f64], t: f64) -> Result<bool, FlowError> {
    ode.in_domain(x)
        .map_err(|source| FlowError { time: t, source })
}

fn finite(ode: &CompiledOde, x: &[f64]) -> bool {
    ode.slots.iter().all(|&s| x[s].is_finite())
}

fn constant_rates(ode: &CompiledOde, x: &[f64]) -> Result<Vec<f64>, FlowError> {
    let mut k0 = vec![0.0; ode.slots.len()];
    if ode.constant_field {
        field(ode, x, &mut k0, 0.0)?;
    }
    Ok(k0)
}

fn full_step_count(cfg: &FlowConfig) -> (usize, f64) {
    let n = (cfg.horizon / cfg.step + 1e-9).floor().max(0.0) as usize;
    let rest = cfg.horizon - n as f64 * cfg.step;
    let rest = if rest > cfg.event_tol { rest } else { 0.0 };
    (n, rest)
}

/// Integrates from `x0` until the horizon or the first step that would leave
/// the domain, whose length is then bisected down to `event_tol`.
///
/// `visit(index, t, x)` sees every accepted point, starting with index 0 at
/// `x0`; returning `Break` ends the flow at that point. Returns `Ok(None)`
/// when `x0` is outside the domain.
pub fn integrate(
    ode: &CompiledOde,
    x0: &[f64],
    cfg: &FlowConfig,
    ws: &mut Workspace,
    mut visit: impl FnMut(usize, f64, &[f64]) -> ControlFlow<()>,
) -> Result<Option<FlowRun>, FlowError> {
    if !in_domain(ode, x0, 0.0)? {
        return Ok(None);
    }
    let h = cfg.step;
    let mut run = FlowRun {
        step: h,
        full_steps: 0,
        tail_step: 0.0,
        end: FlowEnd::Horizon,
    };
    if visit(0, 0.0, x0).is_break() {
        run.end = FlowEnd::Stopped;
        return Ok(Some(run));
    }
    ws.prepare(ode.slots.len(), x0.len());
    let k0 = constant_rates(ode, x0)?;
    let (n, rest) = full_step_count(cfg);
    let mut x = x0.to_vec();

    if ode.constant_field {
        // Same update as `rk4_step`, applied in place with a precomputed
        // increment per variable.
        let inc: Vec<f64> = k0
            .iter()
            .map(|&k| (h / 6.0) * (k + 2.0 * k + 2.0 * k + k))
            .collect();
        let mut saved = vec![0.0; ode.slots.len()];
        for i in 0..n {
            let t = i as f64 * h;
            for (j, &s) in ode.slots.iter().enumerate() {
                saved[j] = x[s];
                x[s] = saved[j] + inc[j];
            }
            if !finite(ode, &x) {
                return Err(FlowError {
                    time: t + h,
                    source: EvalError::NonFinite {
                        term: "ODE state".into(),
                    },
                });
            }
            if !in_domain(ode, &x, t + h)? {
                for (j, &s) in ode.slots.iter().enumerate() {
                    x[s] = saved[j];
                }
                return finish_exit(ode, &x, h, t, i, &k0, cfg, ws, run, visit);
            }
            run.full_steps = i + 1;
            if visit(i + 1, (i + 1) as f64 * h, &x).is_break() {
                run.end = FlowEnd::Stopped;
                return Ok(Some(run));
            }
        }
        return finish_rest(ode, &x, n, rest, &k0, cfg, ws, run, visit);
    }

    for i in 0..n {
        let t = i as f64 * h;
        rk4_step(ode, &x, h, t, &k0, ws)?;
        if !finite(ode, &ws.trial) {
            return Err(FlowError {
                time: t + h,
                source: EvalError::NonFinite {
                    term: "ODE state".into(),
                },
            });
        }
        if !in_domain(ode, &ws.trial, t + h)? {
            return finish_exit(ode, &x, h, t, i, &k0, cfg, ws, run, visit);
        }
        std::mem::swap(&mut x, &mut ws.trial);
        run.full_steps = i + 1;
        if visit(i + 1, (i + 1) as f64 * h, &x).is_break() {
            run.end = FlowEnd::Stopped;
            return Ok(Some(run));
        }
    }
    finish_rest(ode, &x, n, rest, &k0, cfg, ws, run, visit)
}

/// The full step from point `i` at `x` leaves the domain: bisect it.
#[allow(clippy::too_many_arguments)]
fn finish_exit(
    ode: &CompiledOde,
    x: &[f64],
    h: f64,
    t: f64,
    i: usize,
    k0: &[f64],
    cfg: &FlowConfig,
    ws: &mut Workspace,
    mut run: FlowRun,
    mut visit: impl FnMut(usize, f64, &[f64]) -> ControlFlow<()>,
) -> Result<Option<FlowRun>, FlowError> {
    run.tail_step = bisect_exit(ode, x, h, t, k0, cfg.event_tol, ws)?;
    run.end = FlowEnd::DomainExit;
    if run.tail_step > 0.0 {
        rk4_step(ode, x, run.tail_step, t, k0, ws)?;
        let _ = visit(i + 1, t + run.tail_step, &ws.trial);
    }
    Ok(Some(run))
}

/// Partial step covering the horizon left over after `n` full steps.
#[allow(clippy::too_many_arguments)]
fn finish_rest(
    ode: &CompiledOde,
    x: &[f64],
    n: usize,
    rest: f64,
    k0: &[f64],
    cfg: &FlowConfig,
    ws: &mut Workspace,
    mut run: FlowRun,
    mut visit: impl FnMut(usize, f64, &[f64]) -> ControlFlow<()>,
) -> Result<Option<FlowRun>, FlowError> {
    if rest > 0.0 {
        let t = n as f64 * run.step;
        rk4_step(ode, x, rest, t, k0, ws)?;
        if in_domain(ode, &ws.trial, t + rest)? && finite(ode, &ws.trial) {
            run.tail_step = rest;
        } else {
            run.tail_step = bisect_exit(ode, x, rest, t, k0, cfg.event_tol, ws)?;
            run.end = FlowEnd::DomainExit;
            if run.tail_step > 0.0 {
                rk4_step(ode, x, run.tail_step, t, k0, ws)?;
            }
        }
        if run.tail_step > 0.0 {
            let _ = visit(n + 1, t + run.tail_step, &ws.trial);
        }
    }
    Ok(Some(run))
}

/// Largest step in `[0, h)` found by bisection that stays in the domain.
fn bisect_exit(
    ode: &CompiledOde,
    x: &[f64],
    h: f64,
    t: f64,
    k0: &[f64],
    tol: f64,
    ws: &mut Workspace,
) -> Result<f64, FlowError> {
    let (mut lo, mut hi) = (0.0, h);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        rk4_step(ode, x, mid, t, k0, ws)?;
        if finite(ode, &ws.trial) && in_domain(ode, &ws.trial, t + mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Re-runs exactly `full_steps` steps of size `step` and then `tail_step`,
/// calling `visit` on every point. Fails with `Ok(None)` if any point leaves
/// the domain. Used to certify recorded flows.
pub fn replay_run(
    ode: &CompiledOde,
    x0: &[f64],
    step: f64,
    full_steps: usize,
    tail_step: f64,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<Option<Vec<f64>>, FlowError> {
    if !in_domain(ode, x0, 0.0)? {
        return Ok(None);
    }
    visit(0, x0);
    let mut ws = Workspace::default();
    ws.prepare(ode.slots.len(), x0.len());
    let k0 = constant_rates(ode, x0)?;
    let mut x = x0.to_vec();
    for i in 0..full_steps {
        let t = i as f64 * step;
        rk4_step(ode, &x, step, t, &k0, &mut ws)?;
        if !finite(ode, &ws.trial) || !in_domain(ode, &ws.trial, t + step)? {
            return Ok(None);
        }
        std::mem::swap(&mut x, &mut ws.trial);
        visit(i + 1, &x);
    }
    if tail_step > 0.0 {
        let t = full_steps as f64 * step;
        rk4_step(ode, &x, tail_step, t, &k0, &mut ws)?;
        if !finite(ode, &ws.trial) || !in_domain(ode, &ws.trial, t + tail_step)? {
            return Ok(None);
        }
        std::mem::swap(&mut x, &mut ws.trial);
        visit(full_steps + 1, &x);
    }
    Ok(Some(x))
}

/// Accepted-point indices at which a flow with last index `n` is stopped:
/// `m` evenly spaced indices from 0 to `n`, deduplicated.
pub fn sample_indices(n: usize, m: usize) -> Vec<usize> {
    if m <= 1 || n == 0 {
        return vec![n];
    }
    let mut out: Vec<usize> = (0..m)
        .map(|i| ((i as f64) * (n as f64) / ((m - 1) as f64)).round() as usize)
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::state::Signature;
    use crate::syntax::{parse_program, Program};

    fn ode(src: &str, vars: &[&str]) -> CompiledOde {
        let sig = Signature::new(Vec::new(), vars.iter().map(|v| v.to_string()).collect());
        let Program::Ode(o) = parse_program(src).unwrap() else {
            panic!()
        };
        CompiledOde::compile(&o, &sig).unwrap()
    }

    fn run_to_end(o: &CompiledOde, x0: &[f64], cfg: &FlowConfig) -> (FlowRun, Vec<f64>) {
        let mut last = x0.to_vec();
        let run = integrate(o, x0, cfg, &mut Workspace::default(), |_, _, x| {
            last = x.to_vec();
            ControlFlow::Continue(())
        })
        .unwrap()
        .unwrap();
        (run, last)
    }

    #[test]
    fn exit_time_of_unit_drift() {
        let o = ode("{x'=1 & x<=1}", &["x"]);
        let cfg = FlowConfig {
            horizon: 2.0,
            ..FlowConfig::default()
        };
        let (run, last) = run_to_end(&o, &[0.0], &cfg);
        assert_eq!(run.end, FlowEnd::DomainExit);
        assert!(
            (run.duration() - 1.0).abs() <= 1e-9,
            "exit at {}",
            run.duration()
        );
        assert!(last[0] <= 1.0);
    }

    #[test]
    fn horizon_is_respected() {
        let o = ode("{x'=1}", &["x"]);
        let cfg = FlowConfig {
            horizon: 0.25,
            step: 0.1,
            ..FlowConfig::default()
        };
        let (run, last) = run_to_end(&o, &[0.0], &cfg);
        assert_eq!(run.full_steps, 2);
        assert!((run.tail_step - 0.05).abs() < 1e-12);
        assert!((last[0] - 0.25).abs() < 1e-12);
        assert!((run.duration() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn start_outside_domain_has_no_flow() {
        let o = ode("{x'=1 & x<=1}", &["x"]);
        let r = integrate(
            &o,
            &[2.0],
            &FlowConfig::default(),
            &mut Workspace::default(),
            |_, _, _| ControlFlow::Continue(()),
        );
        assert_eq!(r, Ok(None));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let o = ode("{x'=x}", &["x"]);
        let err = |h: f64| {
            let cfg = FlowConfig {
                step: h,
                horizon: 1.0,
                event_tol: 1e-12,
            };
            let (_, last) = run_to_end(&o, &[1.0], &cfg);
            (last[0] - std::f64::consts::E).abs()
        };
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        assert!(e1 / e2 >= 14.0, "{e1} / {e2}");
        assert!(e2 / e3 >= 14.0, "{e2} / {e3}");
    }

    #[test]
    fn constant_field_matches_general_path() {
        // `x'=u` is constant; `x'=u + 0*x` takes the general path.
        let fast = ode("{x'=u & x>=0}", &["x", "u"]);
        let slow = ode("{x'=u + 0*x & x>=0}", &["x", "u"]);
        assert!(fast.constant_field && !slow.constant_field);
        let cfg = FlowConfig::default();
        let (ra, a) = run_to_end(&fast, &[0.3, -0.7], &cfg);
        let (rb, b) = run_to_end(&slow, &[0.3, -0.7], &cfg);
        assert_eq!(ra, rb);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn replay_reproduces_states() {
        // x(t) = exp(-t^2 / 2) drops to 0.5 at t = sqrt(2 ln 2), about 1.18.
        let o = ode("{x'=-x*y, y'=1 & x>=0.5}", &["x", "y"]);
        let cfg = FlowConfig {
            horizon: 2.0,
            ..FlowConfig::default()
        };
        let (run, last) = run_to_end(&o, &[1.0, 0.0], &cfg);
        assert_eq!(run.end, FlowEnd::DomainExit);
        let end = replay_run(
            &o,
            &[1.0, 0.0],
            run.step,
            run.full_steps,
            run.tail_step,
            |_, _| {},
        )
        .unwrap()
        .unwrap();
        assert_eq!(end, last);
        let longer = replay_run(
            &o,
            &[1.0, 0.0],
            run.step,
            run.full_steps + 5,
            0.0,
            |_, _| {},
        )
        .unwrap();
        assert!(longer.is_none());
    }

    #[test]
    fn sample_index_sets() {
        assert_eq!(
            sample_indices(1000, 8),
            vec![0, 143, 286, 429, 571, 714, 857, 1000]
        );
        assert_eq!(sample_indices(3, 8), vec![0, 1, 2, 3]);
        assert_eq!(sample_indices(0, 8), vec![0]);
        assert_eq!(sample_indices(10, 1), vec![10]);
    }
}
