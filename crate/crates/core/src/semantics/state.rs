use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Names of all slots of a state: constants first, then state variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    names: Vec<String>,
    index: HashMap<String, usize>,
    n_constants: usize,
}

impl Signature {
    pub fn new(constants: Vec<String>, variables: Vec<String>) -> Self {
        let n_constants = constants.len();
        let names: Vec<String> = constants.into_iter().chain(variables).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self {
            names,
            index,
            n_constants,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn n_constants(&self) -> usize {
        self.n_constants
    }

    pub fn is_constant(&self, slot: usize) -> bool {
        slot < self.n_constants
    }

    /// Slots of the state variables.
    pub fn variable_slots(&self) -> std::ops::Range<usize> {
        self.n_constants..self.names.len()
    }
}

/// A total valuation of a signature. Values are always finite.
#[derive(Clone, PartialEq)]
pub struct State {
    sig: Arc<Signature>,
    values: Vec<f64>,
}

impl State {
    /// Panics if the lengths disagree or a value is not finite.
    pub fn new(sig: Arc<Signature>, values: Vec<f64>) -> Self {
        assert_eq!(
            sig.len(),
            values.len(),
            "state length must match its signature"
        );
        assert!(
            values.iter().all(|v| v.is_finite()),
            "state values must be finite"
        );
        Self { sig, values }
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        let sig = Signature::new(
            Vec::new(),
            pairs.iter().map(|(n, _)| n.to_string()).collect(),
        );
        Self::new(Arc::new(sig), pairs.iter().map(|(_, v)| *v).collect())
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.sig.slot(name).map(|i| self.values[i])
    }

    pub fn value(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    /// Copy with `values` replaced; used for bulk updates during integration.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            sig: self.sig.clone(),
            values,
        }
    }

    pub fn to_valuation(&self) -> Valuation {
        Valuation(
            self.sig
                .names()
                .iter()
                .cloned()
                .zip(self.values.iter().copied())
                .collect(),
        )
    }

    /// Binds `v` to `sig`; names must appear in signature order.
    pub fn from_valuation(sig: &Arc<Signature>, v: &Valuation) -> Option<Self> {
        if v.0.len() != sig.len() || v.0.iter().zip(sig.names()).any(|((a, _), b)| a != b) {
            return None;
        }
        if v.0.iter().any(|(_, x)| !x.is_finite()) {
            return None;
        }
        Some(Self {
            sig: sig.clone(),
            values: v.0.iter().map(|(_, x)| *x).collect(),
        })
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.sig.names().iter().zip(self.values.iter()))
            .finish()
    }
}

/// Ordered name/value pairs; serialized as a JSON object in slot order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Valuation(pub Vec<(String, f64)>);

impl Valuation {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

impl Serialize for Valuation {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Valuation {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Valuation;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of variable values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Valuation, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    out.push((k, v));
                }
                Ok(Valuation(out))
            }
        }
        de.deserialize_map(V)
    }
}
