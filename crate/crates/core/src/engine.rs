//! Two-state rate model of the dot and exact propagation of its occupation.
//!
//! In reduced units (βε, γt with γ = Γ_out) the occupation obeys
//!
//! ```text
//! ṗ = r·f(βε)·(1 − p) − (1 − f(βε))·p = r·f − (r·f + 1 − f)·p,
//! ```
//!
//! with r = Γ_in/Γ_out. The device has r = 2, which gives
//! ṗ = 2f − (1 + f)p. For frozen βε the solution is an exponential relaxation
//! towards p* = r·f / (r·f + 1 − f), so propagation over a stepwise-constant
//! [`ControlSchedule`] is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EnergyGap, LeverArm, OccupationProbability, PhysicalParams, ELEMENTARY_CHARGE};
use crate::protocol::{ControlSchedule, Protocol};

/// Default number of ramp sub-intervals used when a caller does not choose one.
pub const DEFAULT_GRID_POINTS: usize = 4096;

/// Fermi function 1/(1 + e^x) of a reduced energy.
pub fn fermi(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid("x", format!("must be finite, got {x}")));
    }
    Ok(fermi_unchecked(x))
}

#[inline]
pub(crate) fn fermi_unchecked(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Physical tunnel rates (Hz) at the given gap: (Γ_in f, Γ_out (1 − f)).
pub fn rates(eps: EnergyGap, params: &PhysicalParams) -> (f64, f64) {
    let f = fermi_unchecked(eps.value());
    let one_minus_f = fermi_unchecked(-eps.value());
    (params.gamma_in_bare * f, params.gamma_out_bare * one_minus_f)
}

/// Reduced-unit rate model, parameterised by the degeneracy ratio r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub ratio: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        RateModel { ratio: 2.0 }
    }
}

impl RateModel {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::invalid("ratio", format!("must be > 0, got {ratio}")));
        }
        Ok(RateModel { ratio })
    }

    pub fn from_params(params: &PhysicalParams) -> Self {
        RateModel { ratio: params.ratio() }
    }

    /// Reduced hazards `(empty → occupied, occupied → empty)`.
    #[inline]
    pub fn hazards(&self, beta_eps: f64) -> (f64, f64) {
        (self.ratio * fermi_unchecked(beta_eps), fermi_unchecked(-beta_eps))
    }

    #[inline]
    pub fn equilibrium(&self, beta_eps: f64) -> f64 {
        let (h_in, h_out) = self.hazards(beta_eps);
        h_in / (h_in + h_out)
    }

    /// `(p*, exp(−λ·dt))` for a step frozen at `beta_eps`.
    #[inline]
    pub fn relaxation(&self, beta_eps: f64, dt: f64) -> (f64, f64) {
        let (h_in, h_out) = self.hazards(beta_eps);
        let lambda = h_in + h_out;
        (h_in / lambda, (-lambda * dt).exp())
    }

    #[inline]
    pub fn relax(&self, p0: f64, beta_eps: f64, dt: f64) -> f64 {
        let (p_star, decay) = self.relaxation(beta_eps, dt);
        (p_star + (p0 - p_star) * decay).clamp(0.0, 1.0)
    }

    /// Occupation at every step boundary of `schedule`, starting from `p0`.
    pub fn occupations(&self, schedule: &ControlSchedule, p0: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(schedule.steps.len() + 1);
        let mut current = p0;
        p.push(current);
        for s in &schedule.steps {
            current = self.relax(current, s.level, s.duration);
            p.push(current);
        }
        p
    }

    /// Occupation at time `t` given the dot was occupied with probability
    /// `p_from` at time `t_from ≤ t`.
    pub fn propagate_between(&self, schedule: &ControlSchedule, p_from: f64, t_from: f64, t: f64) -> f64 {
        let mut p = p_from;
        let mut start = 0.0;
        for s in &schedule.steps {
            let end = start + s.duration;
            let lo = start.max(t_from);
            let hi = end.min(t);
            if hi > lo {
                p = self.relax(p, s.level, hi - lo);
            }
            if end >= t {
                break;
            }
            start = end;
        }
        p
    }

    /// q(t | t′): occupation at `t` given the dot was occupied at `t′`.
    pub fn conditional(&self, schedule: &ControlSchedule, t_prime: f64, t: f64) -> Result<f64> {
        if !(t_prime >= 0.0 && t >= t_prime) {
            return Err(Error::invalid(
                "t",
                format!("need 0 <= t' <= t, got t' = {t_prime}, t = {t}"),
            ));
        }
        Ok(self.propagate_between(schedule, 1.0, t_prime, t))
    }
}

/// Stationary occupation p* = 2f/(1 + f) of the r = 2 model.
pub fn equilibrium_occupation(eps: EnergyGap) -> OccupationProbability {
    OccupationProbability::saturating(RateModel::default().equilibrium(eps.value()))
}

/// Exact r = 2 solution p(dt) = p* + (p₀ − p*)·e^{−(1+f)dt}.
pub fn propagate_constant(p0: OccupationProbability, eps: EnergyGap, dt: f64) -> Result<OccupationProbability> {
    if dt.is_nan() || dt < 0.0 {
        return Err(Error::invalid("dt", format!("must be >= 0, got {dt}")));
    }
    Ok(OccupationProbability::saturating(RateModel::default().relax(
        p0.value(),
        eps.value(),
        dt,
    )))
}

/// Occupation on the discretised protocol grid, including every segment
/// boundary. Jumps move βε but never p.
pub fn propagate_protocol(
    p0: OccupationProbability,
    protocol: &Protocol,
    grid_points: usize,
) -> Result<Vec<(f64, OccupationProbability)>> {
    if grid_points < 2 {
        return Err(Error::invalid(
            "grid_points",
            format!("must be >= 2, got {grid_points}"),
        ));
    }
    let schedule = ControlSchedule::from_protocol(protocol, grid_points)?;
    let p = RateModel::default().occupations(&schedule, p0.value());
    Ok(schedule
        .times()
        .into_iter()
        .zip(p)
        .map(|(t, p)| (t, OccupationProbability::saturating(p)))
        .collect())
}

/// q(t | t′) on `protocol` discretised with [`DEFAULT_GRID_POINTS`].
pub fn conditional_propagator(protocol: &Protocol, t_prime: f64, t: f64) -> Result<f64> {
    if t > protocol.gamma_tau * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "t",
            format!("must be <= gamma_tau = {}", protocol.gamma_tau),
        ));
    }
    let schedule = ControlSchedule::from_protocol(protocol, DEFAULT_GRID_POINTS)?;
    RateModel::default().conditional(&schedule, t_prime, t)
}

/// βε = β·α·q_e·(v − v_ref) + ln 2.
pub fn voltage_to_energy(v: f64, cal: &LeverArm, params: &PhysicalParams) -> Result<EnergyGap> {
    EnergyGap::new(params.beta * cal.alpha * ELEMENTARY_CHARGE * (v - cal.v_ref) + crate::params::E0_REDUCED)
}

pub fn energy_to_voltage(eps: EnergyGap, cal: &LeverArm, params: &PhysicalParams) -> f64 {
    (eps.value() - crate::params::E0_REDUCED) / (params.beta * cal.alpha * ELEMENTARY_CHARGE) + cal.v_ref
}
