//! Macroscopic traffic junctions as hybrid programs.
//!
//! The crate covers the triangular fundamental diagram and junction flux
//! laws, a small language for hybrid programs and `.hpm` model files, a
//! numeric transition semantics, and a bounded checker that searches for
//! safety violations. The checker is a falsifier: a reported counterexample
//! is a replayable trace, while a clean result only covers the explored
//! bound.

pub mod checker;
pub mod fundamental_diagram;
pub mod junction;
pub mod models;
pub mod semantics;
pub mod simulate;
pub mod syntax;

#[cfg(feature = "testing")]
pub mod testing;
