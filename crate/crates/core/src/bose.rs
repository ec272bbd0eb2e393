//! Bose–Einstein occupation of a single mode.

use crate::error::{domain, Result};

/// The photon energy ħω measured in units of the thermal energy k_B T.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct BoseEinsteinInput(f64);

impl BoseEinsteinInput {
    pub fn new(photon_energy_over_thermal: f64) -> Result<Self> {
        if photon_energy_over_thermal > 0.0 && !photon_energy_over_thermal.is_nan() {
            Ok(Self(photon_energy_over_thermal))
        } else {
            Err(domain(format!(
                "ħω/k_BT must be positive, got {photon_energy_over_thermal}"
            )))
        }
    }

    pub fn ratio(self) -> f64 {
        self.0
    }

    /// Mean occupation f = 1/(exp(ħω/k_BT) − 1).
    pub fn occupation(self) -> f64 {
        1.0 / self.0.exp_m1()
    }
}

/// f = 1/(e^ratio − 1) for ratio = ħω/k_BT > 0.
pub fn bose_einstein(ratio: f64) -> Result<f64> {
    BoseEinsteinInput::new(ratio).map(BoseEinsteinInput::occupation)
}
