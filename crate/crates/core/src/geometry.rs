//! Far-field coherence geometry of a thermal source.

use serde::Serialize;

use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherenceGeometry {
    /// Transverse coherence length λr/a, in metres.
    pub coherence_length: f64,
    /// Propagating modes 2πA/λ² of the waveguide cross-section.
    pub mode_count: u64,
    /// Detector separation r(λ/a)^{1/3} beyond which the long-range part dominates, in metres.
    pub crossover_distance: f64,
}

pub fn coherence_geometry(
    wavelength: f64,
    source_diameter: f64,
    distance: f64,
    area: f64,
) -> Result<CoherenceGeometry> {
    for (name, v) in [
        ("wavelength", wavelength),
        ("source diameter", source_diameter),
        ("distance", distance),
        ("area", area),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let modes = 2.0 * std::f64::consts::PI * area / (wavelength * wavelength);
    Ok(CoherenceGeometry {
        coherence_length: wavelength * distance / source_diameter,
        mode_count: modes.round() as u64,
        crossover_distance: distance * (wavelength / source_diameter).cbrt(),
    })
}
