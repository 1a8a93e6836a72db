//! Execution traces and their JSON and CSV forms.

use serde::{Deserialize, Serialize};

use super::state::Valuation;

/// Bumped whenever the serialized trace layout changes.
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    /// Accepted-point index within the flow (0 is the start).
    pub index: usize,
    pub t: f64,
    /// Values of `sample_vars`, in order.
    pub values: Vec<f64>,
}

/// One continuous segment: `full_steps` RK4 steps of size `step` and a final
/// step of `tail_step` (zero when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSegment {
    pub step: f64,
    pub full_steps: usize,
    pub tail_step: f64,
    pub duration: f64,
    pub start: Valuation,
    pub end: Valuation,
    pub sample_vars: Vec<String>,
    pub samples: Vec<FlowSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Discrete {
        node: usize,
        label: String,
        pre: Valuation,
        post: Valuation,
    },
    Flow {
        node: usize,
        label: String,
        flow: FlowSegment,
    },
}

impl Event {
    pub fn node(&self) -> usize {
        match self {
            Event::Discrete { node, .. } | Event::Flow { node, .. } => *node,
        }
    }

    pub fn pre(&self) -> &Valuation {
        match self {
            Event::Discrete { pre, .. } => pre,
            Event::Flow { flow, .. } => &flow.start,
        }
    }

    pub fn post(&self) -> &Valuation {
        match self {
            Event::Discrete { post, .. } => post,
            Event::Flow { flow, .. } => &flow.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub version: u32,
    pub initial: Valuation,
    pub events: Vec<Event>,
    #[serde(rename = "final")]
    pub final_state: Valuation,
}

impl Trace {
    pub fn new(initial: Valuation, events: Vec<Event>) -> Self {
        let final_state = events
            .last()
            .map_or_else(|| initial.clone(), |e| e.post().clone());
        Self {
            version: TRACE_VERSION,
            initial,
            events,
            final_state,
        }
    }

    /// Adjacent events agree on the shared state.
    pub fn is_consistent(&self) -> bool {
        let mut cur = &self.initial;
        for e in &self.events {
            if e.pre() != cur {
                return false;
            }
            cur = e.post();
        }
        cur == &self.final_state
    }

    /// `t` followed by the listed variables; one row for the initial state,
    /// one per discrete step and one per flow sample after the flow start.
    pub fn to_csv(&self, vars: &[String]) -> String {
        let mut out = String::from("t");
        for v in vars {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
        let row = |out: &mut String, t: f64, s: &dyn Fn(&str) -> Option<f64>| {
            out.push_str(&format!("{t}"));
            for v in vars {
                out.push(',');
                if let Some(x) = s(v) {
                    out.push_str(&format!("{x}"));
                }
            }
            out.push('\n');
        };
        let mut clock = 0.0;
        row(&mut out, clock, &|v| self.initial.get(v));
        for e in &self.events {
            match e {
                Event::Discrete { post, .. } => row(&mut out, clock, &|v| post.get(v)),
                Event::Flow { flow, .. } => {
                    for smp in flow.samples.iter().filter(|s| s.index > 0) {
                        let lookup = |v: &str| match flow.sample_vars.iter().position(|n| n == v) {
                            Some(j) => smp.values.get(j).copied(),
                            None => flow.start.get(v),
                        };
                        row(&mut out, clock + smp.t, &lookup);
                    }
                    clock += flow.duration;
                }
            }
        }
        out
    }
}
