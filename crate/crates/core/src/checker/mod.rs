//! Bounded search for counterexamples to `[program] safety` and witnesses
//! for `<program> target`.
//!
//! The search unrolls loops up to a bound, samples nondeterministic
//! assignments on a grid and stops every flow at a few evenly spaced
//! durations. Finding nothing is therefore no proof of safety.

mod init;
mod liveness;
mod replay;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use init::initial_states;
pub use replay::{replay, Claim, ReplayError};

use crate::semantics::{CompiledModel, EvalError, Pred, SemanticsError, Trace};
use crate::syntax::{formula_to_string, Formula};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const NOTE: &str =
    "bounded search: finding no counterexample within these bounds is not a proof";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckOptions {
    /// Maximum number of iterations of each loop.
    pub loop_bound: usize,
    /// Grid points per nondeterministic assignment.
    pub grid_points: usize,
    /// Stopping points per flow, from duration zero to the horizon or exit.
    pub duration_samples: usize,
    pub step: f64,
    pub horizon: f64,
    /// Grid points per sampled dimension of the initial region.
    pub init_samples: usize,
    pub event_tol: f64,
    /// Cell width for merging loop-head states; `0` keeps every state.
    pub merge_cell: f64,
    pub seed: u64,
    /// Perturb interior grid points of nondeterministic assignments.
    pub jitter: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            loop_bound: 3,
            grid_points: 9,
            duration_samples: 8,
            step: 1e-3,
            horizon: 1.0,
            init_samples: 3,
            event_tol: 1e-9,
            merge_cell: 0.125,
            seed: 0,
            jitter: false,
        }
    }
}

impl CheckOptions {
    pub fn validate(&self) -> Result<(), CheckError> {
        let bad = |what: &str| Err(CheckError::Options(what.to_string()));
        if self.grid_points == 0 || self.duration_samples == 0 || self.init_samples == 0 {
            return bad("sample counts must be at least 1");
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(self.event_tol.is_finite() && self.event_tol > 0.0) {
            return bad("event tolerance must be positive");
        }
        if !(self.merge_cell.is_finite() && self.merge_cell >= 0.0) {
            return bad("merge cell must be zero or positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub initial_states: usize,
    pub states_explored: usize,
    pub flows_integrated: usize,
    pub integration_steps: usize,
    pub states_merged: usize,
}

impl std::ops::AddAssign for Stats {
    fn add_assign(&mut self, o: Self) {
        self.initial_states += o.initial_states;
        self.states_explored += o.states_explored;
        self.flows_integrated += o.flows_integrated;
        self.integration_steps += o.integration_steps;
        self.states_merged += o.states_merged;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    CounterexampleFound,
    NoViolationAtBound,
    WitnessFound,
    NoWitnessAtBound,
}

impl Verdict {
    /// A counterexample or witness was found.
    pub fn found(self) -> bool {
        matches!(self, Verdict::CounterexampleFound | Verdict::WitnessFound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Box,
    Diamond,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub trace: Trace,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub mode: Mode,
    pub model: String,
    /// The safety formula or the diamond target.
    pub property: String,
    pub verdict: Verdict,
    pub note: String,
    pub options: CheckOptions,
    pub stats: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Evidence>,
    /// Not serialized, so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

impl CheckReport {
    pub fn trace(&self) -> Option<&Trace> {
        self.counterexample
            .as_ref()
            .or(self.witness.as_ref())
            .map(|e| &e.trace)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("invalid options: {0}")]
    Options(String),
    #[error("target: {0}")]
    Target(EvalError),
    #[error("initial states: {0}")]
    Init(SemanticsError),
    /// Evaluation failed during the search; `trace` leads to the failing
    /// step.
    #[error("{source} (after {} steps)", trace.events.len())]
    Semantics {
        source: SemanticsError,
        trace: Box<Trace>,
    },
}

/// Searches for a finite run ending in a state that violates the model's
/// safety formula.
pub fn check_box(model: &CompiledModel, opts: &CheckOptions) -> Result<CheckReport, CheckError> {
    let started = std::time::Instant::now();
    opts.validate()?;
    let goal = search::Goal::Violate(&model.safety);
    let outcome = search::run(model, opts, goal)?;
    Ok(report(
        model,
        opts,
        Mode::Box,
        formula_to_string(&model.model.safety),
        outcome,
        started,
    ))
}

/// Searches for a finite run ending in a state satisfying `target`.
pub fn check_diamond(
    model: &CompiledModel,
    target: &Formula,
    opts: &CheckOptions,
) -> Result<CheckReport, CheckError> {
    let started = std::time::Instant::now();
    opts.validate()?;
    let pred = Pred::compile(target, &model.sig).map_err(CheckError::Target)?;
    let outcome = search::run(model, opts, search::Goal::Reach(&pred))?;
    Ok(report(
        model,
        opts,
        Mode::Diamond,
        formula_to_string(target),
        outcome,
        started,
    ))
}

fn report(
    model: &CompiledModel,
    opts: &CheckOptions,
    mode: Mode,
    property: String,
    outcome: search::Outcome,
    started: std::time::Instant,
) -> CheckReport {
    let evidence = outcome.trace.map(|trace| {
        let csv = trace.to_csv(&model.variable_names());
        Evidence { trace, csv }
    });
    let found = evidence.is_some();
    let verdict = match (mode, found) {
        (Mode::Box, true) => Verdict::CounterexampleFound,
        (Mode::Box, false) => Verdict::NoViolationAtBound,
        (Mode::Diamond, true) => Verdict::WitnessFound,
        (Mode::Diamond, false) => Verdict::NoWitnessAtBound,
    };
    let (counterexample, witness) = match mode {
        Mode::Box => (evidence, None),
        Mode::Diamond => (None, evidence),
    };
    CheckReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: "hybridflow".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        mode,
        model: model.model.name.clone(),
        property,
        verdict,
        note: NOTE.into(),
        options: *opts,
        stats: outcome.stats,
        counterexample,
        witness,
        wall_time: started.elapsed(),
    }
}
