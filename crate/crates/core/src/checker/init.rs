use std::collections::HashSet;

use crate::semantics::program::grid_points;
use crate::semantics::{CompiledModel, SemanticsError, State};

/// Sampled initial states: a grid of `samples` points per ranged slot,
/// followed by the corners of the region not already on the grid. States
/// failing the model's assumption are dropped.
///
/// Slots with a declared value take it. Open interval ends are moved inward
/// by [`BOUND_SHIFT`](crate::semantics::BOUND_SHIFT).
pub fn initial_states(m: &CompiledModel, samples: usize) -> Result<Vec<State>, SemanticsError> {
    let n = m.sig.len();
    let mut grid = Vec::new();
    expand(m, 0, &mut vec![0.0; n], samples, false, &mut grid)?;
    let mut corners = Vec::new();
    expand(m, 0, &mut vec![0.0; n], samples, true, &mut corners)?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for values in grid.into_iter().chain(corners) {
        let key: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        if !seen.insert(key) {
            continue;
        }
        if m.assume.eval(&values)? {
            out.push(m.state(values));
        }
    }
    Ok(out)
}

fn expand(
    m: &CompiledModel,
    slot: usize,
    buf: &mut Vec<f64>,
    samples: usize,
    corners: bool,
    out: &mut Vec<Vec<f64>>,
) -> Result<(), SemanticsError> {
    if slot == buf.len() {
        out.push(buf.clone());
        return Ok(());
    }
    if let Some(v) = &m.values[slot] {
        buf[slot] = v.eval(buf)?;
        return expand(m, slot + 1, buf, samples, corners, out);
    }
    let range = m.ranges[slot]
        .as_ref()
        .ok_or_else(|| SemanticsError::NoRange(m.sig.name(slot).to_string()))?;
    let Some((lo, hi)) = range.sampling_bounds(buf)? else {
        return Ok(());
    };
    let points = if corners {
        if lo == hi {
            vec![lo]
        } else {
            vec![lo, hi]
        }
    } else {
        grid_points(lo, hi, samples)
    };
    for p in points {
        buf[slot] = p;
        expand(m, slot + 1, buf, samples, corners, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_model;

    fn model(src: &str) -> CompiledModel {
        CompiledModel::new(&parse_model(src).unwrap()).unwrap()
    }

    const SRC: &str = "\
constants:
  c = 2
variables:
  x in [0, c]
  y in (0, 1]
  u = 0
program:
  u:=x
safety:
  true
";

    #[test]
    fn grid_and_corners() {
        let m = model(SRC);
        let s = initial_states(&m, 3).unwrap();
        assert_eq!(s.len(), 9);
        assert!(s
            .iter()
            .all(|s| s.get("c") == Some(2.0) && s.get("u") == Some(0.0)));
        let ys: Vec<f64> = s.iter().take(3).map(|s| s.get("y").unwrap()).collect();
        assert_eq!(ys[0], 1e-9);
        assert_eq!(ys[2], 1.0);

        // One sample per dimension: only the midpoint, then the 4 corners.
        let s = initial_states(&m, 1).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].get("x"), Some(1.0));
    }

    #[test]
    fn assumption_filters() {
        let m = model(&SRC.replace("safety:", "assume:\n  x <= y\nsafety:"));
        let s = initial_states(&m, 3).unwrap();
        assert!(s.iter().all(|s| s.get("x").unwrap() <= s.get("y").unwrap()));
        assert_eq!(s.len(), 4);
    }
}
