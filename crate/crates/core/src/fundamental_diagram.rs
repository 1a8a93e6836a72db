//! Triangular flow-density relation and the demand/supply functions it induces.
//!
//! The free-flow branch `Q(k) = v0 * k` holds up to the critical density
//! `k_crit = 1 / (v0 * T + l)`; above it the congested branch
//! `Q(k) = (1 - k * l) / T` falls to zero at the jam density `k_jam = 1 / l`.
//! Link capacity is the peak of the diagram, `v0 * k_crit`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("link parameter `{field}` must be strictly positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("density {density} outside the valid range [0, {k_jam}]")]
pub struct DensityError {
    pub density: f64,
    pub k_jam: f64,
}

/// Physical constants of one lane section plus the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    v0: f64,
    t_headway: f64,
    veh_len: f64,
    link_len: f64,
    capacity: f64,
    k_crit: f64,
    k_jam: f64,
}

fn positive(field: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { field, value })
    }
}

impl LinkParams {
    /// Builds the parameter record from free-flow speed, time headway, vehicle
    /// length and section length.
    pub fn new(v0: f64, t_headway: f64, veh_len: f64, link_len: f64) -> Result<Self, ParamError> {
        let v0 = positive("v0", v0)?;
        let t_headway = positive("t_headway", t_headway)?;
        let veh_len = positive("veh_len", veh_len)?;
        let link_len = positive("link_len", link_len)?;
        let k_crit = 1.0 / (v0 * t_headway + veh_len);
        Ok(Self {
            v0,
            t_headway,
            veh_len,
            link_len,
            capacity: v0 * k_crit,
            k_crit,
            k_jam: 1.0 / veh_len,
        })
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn t_headway(&self) -> f64 {
        self.t_headway
    }

    pub fn veh_len(&self) -> f64 {
        self.veh_len
    }

    pub fn link_len(&self) -> f64 {
        self.link_len
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn k_crit(&self) -> f64 {
        self.k_crit
    }

    pub fn k_jam(&self) -> f64 {
        self.k_jam
    }

    fn check(&self, k: f64) -> Result<(), DensityError> {
        if (0.0..=self.k_jam).contains(&k) {
            Ok(())
        } else {
            Err(DensityError {
                density: k,
                k_jam: self.k_jam,
            })
        }
    }

    fn flow_unchecked(&self, k: f64) -> f64 {
        if k <= self.k_crit {
            self.v0 * k
        } else {
            // Rounding can push the congested branch a hair outside the
            // diagram near k_crit and k_jam.
            ((1.0 - k * self.veh_len) / self.t_headway).clamp(0.0, self.capacity)
        }
    }

    /// Flow carried at density `k`.
    pub fn flow(&self, k: f64) -> Result<f64, DensityError> {
        self.check(k)?;
        Ok(self.flow_unchecked(k))
    }

    /// Largest flow the section can send downstream: `Q(min(k, k_crit))`.
    pub fn demand(&self, k: f64) -> Result<f64, DensityError> {
        self.check(k)?;
        Ok(self.flow_unchecked(k.min(self.k_crit)))
    }

    /// Largest flow the section can accept from upstream: `Q(max(k, k_crit))`.
    pub fn supply(&self, k: f64) -> Result<f64, DensityError> {
        self.check(k)?;
        Ok(self.flow_unchecked(k.max(self.k_crit)))
    }
}
