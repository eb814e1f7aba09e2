use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s (CODATA 2018, exact by SI definition).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Electron mass, kg (CODATA 2018).
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Material and scale parameters. Only needed when talking to the outside
/// world in eV or Å; everything internal is dimensionless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub effective_mass_ratio: f64,
    pub lead_width_angstrom: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            effective_mass_ratio: 0.05,
            lead_width_angstrom: 100.0,
        }
    }
}

impl PhysicalParams {
    pub fn new(effective_mass_ratio: f64, lead_width_angstrom: f64) -> Result<Self> {
        let p = Self {
            effective_mass_ratio,
            lead_width_angstrom,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.effective_mass_ratio > 0.0 && self.effective_mass_ratio.is_finite()) {
            return Err(Error::param("effective_mass_ratio must be positive"));
        }
        if !(self.lead_width_angstrom > 0.0 && self.lead_width_angstrom.is_finite()) {
            return Err(Error::param("lead_width_angstrom must be positive"));
        }
        Ok(())
    }

    /// ħ²/(2 m* W_l²) in eV.
    pub fn energy_unit_ev(&self) -> f64 {
        let w = self.lead_width_angstrom * 1e-10;
        HBAR * HBAR / (2.0 * self.effective_mass_ratio * ELECTRON_MASS * w * w) / ELEMENTARY_CHARGE
    }

    pub fn to_ev(&self, e_internal: f64) -> f64 {
        e_internal * self.energy_unit_ev()
    }

    pub fn from_ev(&self, e_ev: f64) -> f64 {
        e_ev / self.energy_unit_ev()
    }

    /// Internal time unit ħ/E_unit in seconds.
    pub fn time_unit_seconds(&self) -> f64 {
        HBAR / (self.energy_unit_ev() * ELEMENTARY_CHARGE)
    }
}
