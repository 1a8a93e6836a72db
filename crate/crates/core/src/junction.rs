//! Flux laws at linear, diverging and merging junctions, the signal and
//! bus-stop gate factors, and the density rate of a link.

use thiserror::Error;

use crate::fundamental_diagram::LinkParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluxError {
    #[error("`{name}` must be nonnegative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("gate factor must lie in [0, 1], got {0}")]
    Gate(f64),
    #[error("bus-stop slowdown factor must lie in (0, 1), got {0}")]
    Psi(f64),
    #[error("turn ratios must be nonnegative and sum to 1, got {xi1} and {xi2}")]
    TurnRatios { xi1: f64, xi2: f64 },
    #[error("merge capacities must be positive and finite, got {c1} and {c2}")]
    Capacities { c1: f64, c2: f64 },
}

/// Traffic light state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalPhase {
    Green,
    Red,
}

impl SignalPhase {
    pub fn factor(self) -> f64 {
        match self {
            SignalPhase::Green => 1.0,
            SignalPhase::Red => 0.0,
        }
    }
}

/// Occupancy of a bus stop; an occupied stop throttles flow by `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopState {
    occupied: bool,
    psi: f64,
}

impl StopState {
    pub fn new(occupied: bool, psi: f64) -> Result<Self, FluxError> {
        if psi > 0.0 && psi < 1.0 {
            Ok(Self { occupied, psi })
        } else {
            Err(FluxError::Psi(psi))
        }
    }

    pub fn occupied(&self) -> bool {
        self.occupied
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn factor(&self) -> f64 {
        if self.occupied {
            self.psi
        } else {
            1.0
        }
    }
}

const RATIO_TOL: f64 = 1e-12;

/// Split of a diverging flow between the straight lane (`xi1`) and the
/// turning lane (`xi2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnRatios {
    xi1: f64,
    xi2: f64,
}

impl TurnRatios {
    pub fn new(xi1: f64, xi2: f64) -> Result<Self, FluxError> {
        let ok = xi1.is_finite()
            && xi2.is_finite()
            && xi1 >= 0.0
            && xi2 >= 0.0
            && (xi1 + xi2 - 1.0).abs() <= RATIO_TOL;
        if ok {
            Ok(Self { xi1, xi2 })
        } else {
            Err(FluxError::TurnRatios { xi1, xi2 })
        }
    }

    /// Ratios `(xi1, 1 - xi1)`.
    pub fn straight(xi1: f64) -> Result<Self, FluxError> {
        Self::new(xi1, 1.0 - xi1)
    }

    pub fn xi1(&self) -> f64 {
        self.xi1
    }

    pub fn xi2(&self) -> f64 {
        self.xi2
    }
}

/// Capacities of the two upstream lanes of a merge; they set the priority
/// share `c1 / (c1 + c2)` of lane 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeCapacities {
    c1: f64,
    c2: f64,
}

impl MergeCapacities {
    pub fn new(c1: f64, c2: f64) -> Result<Self, FluxError> {
        if c1.is_finite() && c2.is_finite() && c1 > 0.0 && c2 > 0.0 {
            Ok(Self { c1, c2 })
        } else {
            Err(FluxError::Capacities { c1, c2 })
        }
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn priority_share(&self) -> f64 {
        self.c1 / (self.c1 + self.c2)
    }
}

fn nonneg(name: &'static str, value: f64) -> Result<f64, FluxError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(FluxError::Negative { name, value })
    }
}

fn gate_factor(gate: f64) -> Result<f64, FluxError> {
    if (0.0..=1.0).contains(&gate) {
        Ok(gate)
    } else {
        Err(FluxError::Gate(gate))
    }
}

/// Flux through a linear junction, `gate * min(d1, s2)`. The gate is the
/// signal factor, or the bus-stop factor for a stop on the link.
pub fn linear_flux(d1: f64, s2: f64, gate: f64) -> Result<f64, FluxError> {
    let d1 = nonneg("d1", d1)?;
    let s2 = nonneg("s2", s2)?;
    Ok(gate_factor(gate)? * d1.min(s2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergeFlux {
    /// Outflow of the upstream lane.
    pub g0: f64,
    /// Inflow of the straight lane.
    pub f1: f64,
    /// Inflow of the turning lane.
    pub f2: f64,
}

/// Flux through a one-to-two diverge.
///
/// A zero turn ratio removes its supply term from the minimum: no vehicles
/// head that way, so that lane can never be the bottleneck.
pub fn diverge_flux(
    d0: f64,
    s1: f64,
    s2: f64,
    ratios: &TurnRatios,
    gate: f64,
) -> Result<DivergeFlux, FluxError> {
    let d0 = nonneg("d0", d0)?;
    let s1 = nonneg("s1", s1)?;
    let s2 = nonneg("s2", s2)?;
    let gate = gate_factor(gate)?;
    let bound = |s: f64, xi: f64| if xi > 0.0 { s / xi } else { f64::INFINITY };
    let g0 = gate * d0.min(bound(s1, ratios.xi1)).min(bound(s2, ratios.xi2));
    let f1 = ratios.xi1 * g0;
    Ok(DivergeFlux {
        g0,
        f1,
        f2: g0 - f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeFlux {
    /// Inflow of the downstream lane.
    pub f3: f64,
    /// Outflow of upstream lane 1.
    pub g1: f64,
    /// Outflow of upstream lane 2.
    pub g2: f64,
}

/// Flux through a two-to-one merge with capacity-proportional priority.
///
/// `g1` is snapped down onto the ulp grid of `f3` before `g2 = f3 - g1` is
/// formed, which makes the subtraction exact and `g1 + g2 == f3` hold bit for
/// bit. The snap moves `g1` by less than one ulp of `f3`.
pub fn merge_flux(
    d1: f64,
    d2: f64,
    s3: f64,
    caps: &MergeCapacities,
) -> Result<MergeFlux, FluxError> {
    let d1 = nonneg("d1", d1)?;
    let d2 = nonneg("d2", d2)?;
    let s3 = nonneg("s3", s3)?;
    let f3 = (d1 + d2).min(s3);
    let g1 = d1.min((s3 - d2).max(caps.priority_share() * s3));
    let g1 = snap_to_ulp_grid(g1, f3);
    Ok(MergeFlux {
        f3,
        g1,
        g2: f3 - g1,
    })
}

/// Rounds `x` (with `0 <= x <= total`) down to a multiple of the spacing of
/// doubles at `total`.
fn snap_to_ulp_grid(x: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let ulp = f64::from_bits(total.to_bits() + 1) - total;
    (x / ulp).floor() * ulp
}

/// Rate of change of a link's density, `(f_in - g_out) / L`.
pub fn link_density_rate(f_in: f64, g_out: f64, params: &LinkParams) -> Result<f64, FluxError> {
    let f_in = nonneg("f_in", f_in)?;
    let g_out = nonneg("g_out", g_out)?;
    Ok((f_in - g_out) / params.link_len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn signal_and_stop_factors() {
        assert_eq!(SignalPhase::Green.factor(), 1.0);
        assert_eq!(SignalPhase::Red.factor(), 0.0);
        assert_eq!(SignalPhase::Red.factor(), SignalPhase::Red.factor());
        assert_eq!(StopState::new(false, 0.3).unwrap().factor(), 1.0);
        assert_eq!(StopState::new(true, 0.3).unwrap().factor(), 0.3);
        let nearly_one = StopState::new(true, 1.0 - 1e-12).unwrap().factor();
        assert!((nearly_one - 1.0).abs() < 1e-11);
        assert!(StopState::new(true, 1.0).is_err());
        assert!(StopState::new(false, 0.0).is_err());
    }

    #[test]
    fn linear_examples() {
        assert_eq!(linear_flux(0.4, 0.6, 0.0).unwrap(), 0.0);
        assert_eq!(linear_flux(0.4, 0.6, 1.0).unwrap(), 0.4);
        // 0.3 * min(0.4, 0.6)
        assert!((linear_flux(0.4, 0.6, 0.3).unwrap() - 0.12).abs() <= 1e-12);
        assert!(linear_flux(-0.1, 0.6, 1.0).is_err());
        assert!(linear_flux(0.1, 0.6, 1.5).is_err());
    }

    #[test]
    fn diverge_examples() {
        let half = TurnRatios::new(0.5, 0.5).unwrap();
        // min(0.4, 1/0.5, 1/0.5) = 0.4
        let r = diverge_flux(0.4, 1.0, 1.0, &half, 1.0).unwrap();
        assert_eq!((r.g0, r.f1, r.f2), (0.4, 0.2, 0.2));
        // s1/xi1 = 0.2 binds
        let r = diverge_flux(0.4, 0.1, 1.0, &half, 1.0).unwrap();
        assert_eq!((r.g0, r.f1, r.f2), (0.2, 0.1, 0.1));
        let r = diverge_flux(0.7, 0.3, 0.9, &half, 0.0).unwrap();
        assert_eq!((r.g0, r.f1, r.f2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn diverge_with_zero_ratio_collapses_to_linear() {
        let all_straight = TurnRatios::new(1.0, 0.0).unwrap();
        let r = diverge_flux(0.4, 0.3, 0.0, &all_straight, 1.0).unwrap();
        assert_eq!(r.g0, linear_flux(0.4, 0.3, 1.0).unwrap());
        assert_eq!(r.f2, 0.0);
    }

    #[test]
    fn turn_ratio_validation() {
        assert!(TurnRatios::new(0.4, 0.5).is_err());
        assert!(TurnRatios::new(-0.1, 1.1).is_err());
        assert!(TurnRatios::straight(0.3).is_ok());
    }

    #[test]
    fn merge_examples() {
        let caps = MergeCapacities::new(1.0, 1.0).unwrap();
        // f3 = min(1.2, 1.0); g1 = min(0.6, max(0.4, 0.5))
        let r = merge_flux(0.6, 0.6, 1.0, &caps).unwrap();
        assert_eq!((r.f3, r.g1, r.g2), (1.0, 0.5, 0.5));
        // uncongested: max(0.8, 0.5) > d1 so g1 = d1
        let r = merge_flux(0.2, 0.2, 1.0, &caps).unwrap();
        assert_eq!((r.f3, r.g1, r.g2), (0.4, 0.2, 0.2));
        let odd = MergeCapacities::new(0.3, 2.0).unwrap();
        let r = merge_flux(0.0, 0.0, 0.7, &odd).unwrap();
        assert_eq!((r.f3, r.g1, r.g2), (0.0, 0.0, 0.0));
        assert!(merge_flux(0.1, -0.2, 0.5, &caps).is_err());
        assert!(MergeCapacities::new(0.0, 1.0).is_err());
    }

    #[test]
    fn merge_conservation_on_rounding_sensitive_cases() {
        use rand::{Rng, SeedableRng};
        // Plain `f3 - g1` loses the identity for a fraction of inputs.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut broken = 0;
        for _ in 0..20_000 {
            let (d1, d2, s3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let caps =
                MergeCapacities::new(rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)).unwrap();
            let f3 = (d1 + d2).min(s3);
            let g1 = d1.min((s3 - d2).max(caps.priority_share() * s3));
            if g1 + (f3 - g1) != f3 {
                broken += 1;
            }
            let r = merge_flux(d1, d2, s3, &caps).unwrap();
            assert_eq!(r.g1 + r.g2, r.f3);
            assert!((r.g1 - g1).abs() <= f64::EPSILON * f3.max(1e-300));
        }
        assert!(broken > 0);
    }

    #[test]
    fn density_rate_examples() {
        let p = |len| LinkParams::new(1.0, 1.0, 1.0, len).unwrap();
        assert_eq!(link_density_rate(0.4, 0.4, &p(3.7)).unwrap(), 0.0);
        assert!((link_density_rate(0.5, 0.1, &p(2.0)).unwrap() - 0.2).abs() <= 1e-12);
        assert_eq!(link_density_rate(0.0, 0.3, &p(1.0)).unwrap(), -0.3);
    }

    proptest! {
        #[test]
        fn merge_bounds(d1 in 0.0..2.0f64, d2 in 0.0..2.0f64, s3 in 0.0..2.0f64,
                        c1 in 1e-3..5.0f64, c2 in 1e-3..5.0f64) {
            let caps = MergeCapacities::new(c1, c2).unwrap();
            let r = merge_flux(d1, d2, s3, &caps).unwrap();
            prop_assert_eq!(r.g1 + r.g2, r.f3);
            prop_assert!(r.g1 >= 0.0 && r.g1 <= d1 + 1e-12);
            prop_assert!(r.g2 >= 0.0 && r.g2 <= d2 + 1e-12);
            prop_assert!(r.f3 <= s3);
            if d1 > s3 && d2 > s3 {
                prop_assert!(r.g1 >= caps.priority_share() * s3 - 1e-12);
            }
        }

        #[test]
        fn diverge_bounds(d0 in 0.0..2.0f64, s1 in 0.0..2.0f64, s2 in 0.0..2.0f64,
                          xi1 in 0.0..=1.0f64, gate in 0.0..=1.0f64) {
            let ratios = TurnRatios::straight(xi1).unwrap();
            let r = diverge_flux(d0, s1, s2, &ratios, gate).unwrap();
            prop_assert!((r.f1 + r.f2 - r.g0).abs() <= 1e-12);
            prop_assert!(r.f1 <= s1 + 1e-12 && r.f2 <= s2 + 1e-12);
            prop_assert!(r.g0 <= d0);
            prop_assert!(r.f1 >= 0.0 && r.f2 >= 0.0);
            if r.g0 > 0.0 {
                prop_assert!((r.f1 * ratios.xi2() - r.f2 * ratios.xi1()).abs() <= 1e-9);
            }
        }

        #[test]
        fn fluxes_monotone_in_gate(d in 0.0..2.0f64, s1 in 0.0..2.0f64, s2 in 0.0..2.0f64,
                                   a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(linear_flux(d, s1, lo).unwrap() <= linear_flux(d, s1, hi).unwrap());
            let ratios = TurnRatios::straight(0.35).unwrap();
            let g_lo = diverge_flux(d, s1, s2, &ratios, lo).unwrap().g0;
            let g_hi = diverge_flux(d, s1, s2, &ratios, hi).unwrap().g0;
            prop_assert!(g_lo <= g_hi);
        }
    }
}
