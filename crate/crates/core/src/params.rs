//! Physical parameters and the small domain newtypes shared by every module.
//!
//! Internally everything is *reduced*: energies are multiplied by β and times
//! by γ = Γ_out. [`PhysicalParams`] is the only place that knows about SI
//! units.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Elementary charge, C (exact SI value).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced reset energy βE₀ = ln 2, at which the dot is half occupied.
pub const E0_REDUCED: f64 = LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Inverse temperature 1/(k_B T), 1/J.
    pub beta: f64,
    /// Bare tunnel-in rate Γ_in, Hz.
    pub gamma_in_bare: f64,
    /// Bare tunnel-out rate Γ_out, Hz. Sets the reduced time unit.
    pub gamma_out_bare: f64,
}

impl PhysicalParams {
    pub fn new(beta: f64, gamma_in_bare: f64, gamma_out_bare: f64) -> Result<Self> {
        for (name, v) in [
            ("beta", beta),
            ("gamma_in_bare", gamma_in_bare),
            ("gamma_out_bare", gamma_out_bare),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(PhysicalParams {
            beta,
            gamma_in_bare,
            gamma_out_bare,
        })
    }

    pub fn from_temperature(kelvin: f64, gamma_in_hz: f64, gamma_out_hz: f64) -> Result<Self> {
        if !(kelvin.is_finite() && kelvin > 0.0) {
            return Err(Error::invalid("temperature", format!("must be > 0 K, got {kelvin}")));
        }
        Self::new(1.0 / (BOLTZMANN * kelvin), gamma_in_hz, gamma_out_hz)
    }

    /// T = 180 mK, Γ_in = 7.0 Hz, Γ_out = 3.5 Hz.
    pub fn reference_device() -> Self {
        Self::from_temperature(0.180, 7.0, 3.5).expect("reference constants are valid")
    }

    pub fn temperature(&self) -> f64 {
        1.0 / (BOLTZMANN * self.beta)
    }

    /// E₀ = k_B T ln 2, recomputed from β on every call.
    pub fn e0(&self) -> f64 {
        LN_2 / self.beta
    }

    /// Degeneracy ratio r = Γ_in / Γ_out.
    pub fn ratio(&self) -> f64 {
        self.gamma_in_bare / self.gamma_out_bare
    }

    pub fn seconds(&self, reduced_time: f64) -> f64 {
        reduced_time / self.gamma_out_bare
    }

    pub fn reduced_time(&self, seconds: f64) -> f64 {
        seconds * self.gamma_out_bare
    }

    pub fn joules(&self, reduced_energy: f64) -> f64 {
        reduced_energy / self.beta
    }

    pub fn reduced_energy(&self, joules: f64) -> f64 {
        joules * self.beta
    }

    /// Converts a reduced power βW/(γτ) to watts.
    pub fn watts(&self, reduced_power: f64) -> f64 {
        reduced_power * self.gamma_out_bare / self.beta
    }

    pub fn reduced_power(&self, watts: f64) -> f64 {
        watts * self.beta / self.gamma_out_bare
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::reference_device()
    }
}

/// Reduced energy gap βε.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyGap(f64);

impl EnergyGap {
    pub fn new(beta_eps: f64) -> Result<Self> {
        if beta_eps.is_finite() {
            Ok(EnergyGap(beta_eps))
        } else {
            Err(Error::invalid("beta_eps", format!("must be finite, got {beta_eps}")))
        }
    }

    pub fn reset() -> Self {
        EnergyGap(E0_REDUCED)
    }

    pub fn from_joules(eps: f64, params: &PhysicalParams) -> Result<Self> {
        Self::new(params.reduced_energy(eps))
    }

    pub fn joules(self, params: &PhysicalParams) -> f64 {
        params.joules(self.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationProbability(f64);

impl OccupationProbability {
    pub fn new(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(OccupationProbability(p))
        } else {
            Err(Error::invalid("p", format!("must lie in [0, 1], got {p}")))
        }
    }

    /// Clamps round-off excursions outside `[0, 1]`.
    pub(crate) fn saturating(p: f64) -> Self {
        OccupationProbability(p.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Gate lever arm: converts a gate-voltage offset to a dot energy offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverArm {
    pub alpha: f64,
    /// Gate voltage (V) at which ε = E₀.
    pub v_ref: f64,
}

impl LeverArm {
    /// Lever arm extracted from bias triangles on the reference device.
    pub const REFERENCE_ALPHA: f64 = 0.041;

    pub fn new(alpha: f64, v_ref: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if !v_ref.is_finite() {
            return Err(Error::invalid("v_ref", "must be finite"));
        }
        Ok(LeverArm { alpha, v_ref })
    }
}

/// Measurement outcome a feedback protocol serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Branch {
    /// Dot measured empty (n = 0); p starts at 0 and rises.
    Empty,
    /// Dot measured occupied (n = 1); p starts at 1 and falls.
    Occupied,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Empty, Branch::Occupied];

    pub fn bit(self) -> u8 {
        match self {
            Branch::Empty => 0,
            Branch::Occupied => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Branch::Empty),
            1 => Ok(Branch::Occupied),
            b => Err(Error::invalid("branch", format!("must be 0 or 1, got {b}"))),
        }
    }

    /// Occupation probability right after the measurement.
    pub fn initial_probability(self) -> f64 {
        f64::from(self.bit())
    }

    /// +1 when p increases along the optimal trajectory, −1 otherwise.
    pub fn direction(self) -> f64 {
        match self {
            Branch::Empty => 1.0,
            Branch::Occupied => -1.0,
        }
    }
}

impl TryFrom<u8> for Branch {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Branch::from_bit(v)
    }
}

impl From<Branch> for u8 {
    fn from(b: Branch) -> u8 {
        b.bit()
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bit())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e0_times_beta_is_ln2() {
        let p = PhysicalParams::reference_device();
        assert!((p.e0() * p.beta - LN_2).abs() < 1e-15);
        assert!((p.temperature() - 0.180).abs() < 1e-15);
        assert_eq!(p.ratio(), 2.0);
    }

    #[test]
    fn rejects_non_positive_params() {
        assert!(PhysicalParams::new(0.0, 1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, f64::NAN).is_err());
        assert!(PhysicalParams::from_temperature(-0.1, 7.0, 3.5).is_err());
    }

    #[test]
    fn si_round_trip() {
        let p = PhysicalParams::reference_device();
        for x in [0.0, 1e-3, 0.4, 17.0] {
            assert!((p.reduced_energy(p.joules(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!((p.reduced_time(p.seconds(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!((p.reduced_power(p.watts(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn branch_serde_is_a_bit() {
        assert_eq!(serde_json::to_string(&Branch::Occupied).unwrap(), "1");
        assert_eq!(serde_json::from_str::<Branch>("0").unwrap(), Branch::Empty);
        assert!(serde_json::from_str::<Branch>("2").is_err());
    }

    #[test]
    fn newtype_validation() {
        assert!(EnergyGap::new(f64::INFINITY).is_err());
        assert!(OccupationProbability::new(1.0 + 1e-9).is_err());
        assert!(OccupationProbability::new(0.0).is_ok());
        assert!(LeverArm::new(0.0, 0.1).is_err());
    }
}
