//! The four junction models shipped with the crate.

use crate::syntax::{parse_model, ModelError, ModelFile};

#[derive(Debug, Clone, Copy)]
pub struct BuiltinModel {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

impl BuiltinModel {
    pub fn parse(&self) -> Result<ModelFile, ModelError> {
        parse_model(self.source)
    }
}

pub const BUILTIN: [BuiltinModel; 4] = [
    BuiltinModel {
        name: "linear-signal",
        summary: "two lanes joined by a traffic light",
        source: include_str!("../models/linear-signal.hpm"),
    },
    BuiltinModel {
        name: "linear-busstop",
        summary: "two lanes with a bus stop between them",
        source: include_str!("../models/linear-busstop.hpm"),
    },
    BuiltinModel {
        name: "diverge",
        summary: "one lane splitting into two",
        source: include_str!("../models/diverge.hpm"),
    },
    BuiltinModel {
        name: "merge",
        summary: "two lanes merging into one",
        source: include_str!("../models/merge.hpm"),
    },
];

pub fn builtin(name: &str) -> Option<&'static BuiltinModel> {
    BUILTIN.iter().find(|m| m.name == name)
}
