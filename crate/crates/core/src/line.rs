//! Lorentzian absorption line and the frequency integral over it.
//!
//! Frequencies enter only through the detuning x = (ω − ω₀)/Ω_c. The
//! physical integral runs over ω > 0; with Ω_c ≪ ω₀ the part of the
//! Lorentzian below ω = 0 is negligible, so integrals here run over all
//! real x.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate_real_line, QuadratureConfig};

/// Above this ratio Ω_c/ω₀ the narrow-line approximation is flagged.
pub const NARROW_LINE_RATIO: f64 = 0.1;

/// Absorption line ε″(ω) ∝ [1 + (ω − ω₀)²/Ω_c²]⁻¹.
///
/// `peak_strength` is the geometry's absorption parameter at line center:
/// s₀ = L/ξ₀ for the waveguide, γ₀ for the cavity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianLine {
    center: f64,
    half_width: f64,
    peak_strength: f64,
}

impl LorentzianLine {
    pub fn new(center: f64, half_width: f64, peak_strength: f64) -> Result<Self> {
        if !(center > 0.0) {
            return Err(domain(format!("line center must be positive, got {center}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(domain(format!("line width must be positive, got {half_width}")));
        }
        if !(peak_strength >= 0.0 && peak_strength.is_finite()) {
            return Err(domain(format!(
                "peak strength must be non-negative, got {peak_strength}"
            )));
        }
        Ok(Self {
            center,
            half_width,
            peak_strength,
        })
    }

    /// A line of unit width far from zero frequency. Integrals over it come
    /// out in units of Ω_c.
    pub fn unit_width(peak_strength: f64) -> Result<Self> {
        Self::new(f64::INFINITY, 1.0, peak_strength)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn peak_strength(&self) -> f64 {
        self.peak_strength
    }

    /// True when Ω_c ≪ ω₀ does not hold well enough to drop the ω < 0 tail.
    pub fn is_broad(&self) -> bool {
        self.half_width > NARROW_LINE_RATIO * self.center
    }

    pub fn detuning(&self, omega: f64) -> f64 {
        (omega - self.center) / self.half_width
    }

    /// ε″(x)/ε″₀ = 1/(1 + x²).
    pub fn profile(x: f64) -> f64 {
        1.0 / (1.0 + x * x)
    }

    /// ξ(x)/ξ₀ = √(1 + x²): the absorption length grows away from line center.
    pub fn absorption_length_ratio(x: f64) -> f64 {
        x.hypot(1.0)
    }

    /// Waveguide s(x) = L/ξ(x) = s₀/√(1 + x²).
    pub fn waveguide_strength(&self, x: f64) -> f64 {
        self.peak_strength / Self::absorption_length_ratio(x)
    }

    /// Cavity γ(x) = γ₀/(1 + x²).
    pub fn cavity_strength(&self, x: f64) -> f64 {
        self.peak_strength * Self::profile(x)
    }
}

/// ∫ g(ω) dω/2π over the line, i.e. (Ω_c/2π) ∫ g(x) dx.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineIntegral {
    pub value: f64,
    pub error: f64,
}

pub fn line_integral<G>(integrand: G, line: &LorentzianLine, config: &QuadratureConfig) -> Result<LineIntegral>
where
    G: Fn(f64) -> f64,
{
    let q = integrate_real_line(integrand, config)?;
    let scale = line.half_width / (2.0 * PI);
    Ok(LineIntegral {
        value: q.value * scale,
        error: q.error * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lorentzian_moments() {
        let line = LorentzianLine::new(1e15, 3.0, 1.0).unwrap();
        let cfg = QuadratureConfig::default();
        let a = line_integral(LorentzianLine::profile, &line, &cfg).unwrap();
        assert_relative_eq!(a.value, 1.5, max_relative = 1e-10);
        let b = line_integral(|x| LorentzianLine::profile(x).powi(2), &line, &cfg).unwrap();
        assert_relative_eq!(b.value, 0.75, max_relative = 1e-10);
    }

    #[test]
    fn strength_profiles() {
        let line = LorentzianLine::unit_width(2.0).unwrap();
        assert_relative_eq!(line.waveguide_strength(0.0), 2.0);
        assert_relative_eq!(line.waveguide_strength(1.0), 2.0 / 2f64.sqrt());
        assert_relative_eq!(line.cavity_strength(1.0), 1.0);
        assert_relative_eq!(LorentzianLine::absorption_length_ratio(3.0), 10f64.sqrt());
    }

    #[test]
    fn validation_and_flags() {
        assert!(LorentzianLine::new(1.0, 0.0, 1.0).is_err());
        assert!(LorentzianLine::new(1.0, 1.0, -1.0).is_err());
        assert!(LorentzianLine::new(-1.0, 1.0, 1.0).is_err());
        assert!(LorentzianLine::new(1.0, 0.5, 1.0).unwrap().is_broad());
        assert!(!LorentzianLine::new(100.0, 0.5, 1.0).unwrap().is_broad());
    }
}
