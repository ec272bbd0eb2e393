//! Photocurrent correlators from the spectral moments of the scattering strengths.
//!
//! With σ̄ᵖ = N⁻¹ Σₙ σₙᵖ and ⟨…⟩ the ensemble average, the large-N correlators are
//!
//! ```text
//! C_kl = (α_k α_l f² / N) ∫ (⟨σ̄²⟩ − ⟨σ̄⟩²) dω/2π        (k ≠ l)
//! Ī_k  = α_k f ∫ ⟨1 − σ̄⟩ dω/2π
//! C_kk = α_k² f² ∫ ⟨1 − σ̄⟩² dω/2π + Ī_k
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::line::{line_integral, LorentzianLine};
use crate::quadrature::QuadratureConfig;

/// Ensemble averages ⟨σ̄⟩ and ⟨σ̄²⟩ at one frequency.
///
/// Internally the moments are held as the mean absorptance ⟨1 − σ̄⟩ and the
/// variance ⟨σ̄²⟩ − ⟨σ̄⟩², which stay accurate when both are tiny; the raw
/// moments are derived on demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMoments {
    absorptance: f64,
    variance: f64,
    /// Standard error of ⟨σ̄⟩; zero for analytic moments.
    pub se_mean: f64,
    /// Standard error of ⟨σ̄²⟩.
    pub se_sq: f64,
    /// Standard error of the variance.
    pub se_variance: f64,
}

impl SpectralMoments {
    /// Exact (noise-free) moments from ⟨σ̄⟩ and ⟨σ̄²⟩.
    pub fn exact(mean_sigma: f64, mean_sigma_sq: f64) -> Self {
        Self::from_absorptance(1.0 - mean_sigma, mean_sigma_sq - mean_sigma * mean_sigma)
    }

    /// Moments specified through the mean absorptance ⟨1 − σ̄⟩ and the variance.
    pub fn from_absorptance(mean_absorptance: f64, variance: f64) -> Self {
        Self {
            absorptance: mean_absorptance,
            variance,
            se_mean: 0.0,
            se_sq: 0.0,
            se_variance: 0.0,
        }
    }

    /// Attach standard errors (of ⟨σ̄⟩, ⟨σ̄²⟩ and the variance).
    pub fn with_errors(self, se_mean: f64, se_sq: f64, se_variance: f64) -> Self {
        Self {
            se_mean,
            se_sq,
            se_variance,
            ..self
        }
    }

    /// A lossless medium: every σₙ = 1.
    pub fn lossless() -> Self {
        Self::from_absorptance(0.0, 0.0)
    }

    pub fn mean_sigma(&self) -> f64 {
        1.0 - self.absorptance
    }

    pub fn mean_sigma_sq(&self) -> f64 {
        let m = self.mean_sigma();
        self.variance + m * m
    }

    /// ⟨σ̄²⟩ − ⟨σ̄⟩².
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// ⟨1 − σ̄⟩.
    pub fn mean_absorptance(&self) -> f64 {
        self.absorptance
    }

    /// Check 0 ≤ ⟨σ̄²⟩ ≤ ⟨σ̄⟩ ≤ 1 and a nonnegative variance, each within
    /// `tolerance` standard errors (plus rounding slack).
    pub fn check(&self, tolerance: f64) -> Result<()> {
        let slack = |se: f64| tolerance * se + 1e-12;
        let (m, q) = (self.mean_sigma(), self.mean_sigma_sq());
        if self.absorptance < -slack(self.se_mean) || q < -slack(self.se_sq) {
            return Err(domain(format!("moments outside [0, 1]: ⟨σ̄⟩={m}, ⟨σ̄²⟩={q}")));
        }
        if q > m + slack(self.se_mean + self.se_sq) {
            return Err(domain(format!("⟨σ̄²⟩={q} exceeds ⟨σ̄⟩={m}")));
        }
        if self.variance < -slack(self.se_variance) {
            return Err(domain(format!("negative variance {}", self.variance)));
        }
        Ok(())
    }
}

/// Two photodetectors and the thermal occupation of the radiation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorPair {
    pub alpha_k: f64,
    pub alpha_l: f64,
    /// Bose–Einstein occupation at line center.
    pub occupation: f64,
}

impl DetectorPair {
    pub fn new(alpha_k: f64, alpha_l: f64, occupation: f64) -> Result<Self> {
        for (name, a) in [("alpha_k", alpha_k), ("alpha_l", alpha_l)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(domain(format!("{name} must lie in [0, 1], got {a}")));
            }
        }
        if !(occupation >= 0.0 && occupation.is_finite()) {
            return Err(domain(format!("occupation must be non-negative, got {occupation}")));
        }
        Ok(Self {
            alpha_k,
            alpha_l,
            occupation,
        })
    }

    /// Perfect detectors with unit occupation.
    pub fn ideal() -> Self {
        Self {
            alpha_k: 1.0,
            alpha_l: 1.0,
            occupation: 1.0,
        }
    }
}

/// Unit system a [`CorrelatorResult`] is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// C_kl in Ω_c l f² α_k α_l / N ξ₀, C_kk − Ī_k in Ω_c (l f α_k / ξ₀)², Ī_k in Ω_c l f α_k / ξ₀.
    WaveguideReduced,
    /// C_kl in Ω_c f² α_k α_l / N, C_kk − Ī_k in Ω_c f² α_k², Ī_k in Ω_c f α_k.
    CavityReduced,
    /// Photocounts per unit time, with Ω_c in rad/s.
    Absolute,
}

/// Long-range correlator, short-range (excess) correlator and mean current.
///
/// The short-range part is stored as C_kk − Ī_k because in reduced units it
/// carries different dimensions from Ī_k.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorResult {
    pub cross: f64,
    pub excess_auto: f64,
    pub mean_current: f64,
    pub units: Units,
    #[serde(default)]
    pub flags: ResultFlags,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFlags {
    /// Some sampled frequency had a variance below −(statistical tolerance).
    pub negative_variance: bool,
    /// Inputs lie outside the regime the closed forms assume.
    pub extrapolated: bool,
}

impl CorrelatorResult {
    pub fn zero(units: Units) -> Self {
        Self {
            cross: 0.0,
            excess_auto: 0.0,
            mean_current: 0.0,
            units,
            flags: ResultFlags::default(),
        }
    }

    /// C_kk, available only in absolute units.
    pub fn auto(&self) -> Option<f64> {
        (self.units == Units::Absolute).then_some(self.excess_auto + self.mean_current)
    }
}

/// Integrate a frequency profile of spectral moments into correlators.
///
/// `moments` maps the detuning x to the moments at that frequency. The result
/// is in absolute units (it carries one factor of Ω_c).
pub fn correlators_from_moments<P>(
    moments: P,
    line: &LorentzianLine,
    detectors: &DetectorPair,
    mode_count: usize,
    config: &QuadratureConfig,
) -> Result<CorrelatorResult>
where
    P: Fn(f64) -> SpectralMoments,
{
    if mode_count == 0 {
        return Err(domain("mode count must be at least 1"));
    }
    if line.peak_strength() == 0.0 {
        return Ok(CorrelatorResult::zero(Units::Absolute));
    }
    let negative = std::cell::Cell::new(false);
    let variance = line_integral(
        |x| {
            let m = moments(x);
            let v = m.variance();
            if v < -(3.0 * m.se_variance + 1e-12) {
                negative.set(true);
            }
            v
        },
        line,
        config,
    )?;
    let absorptance = line_integral(|x| moments(x).mean_absorptance(), line, config)?;
    let absorptance_sq = line_integral(|x| moments(x).mean_absorptance().powi(2), line, config)?;

    let DetectorPair {
        alpha_k,
        alpha_l,
        occupation: f,
    } = *detectors;
    Ok(CorrelatorResult {
        cross: alpha_k * alpha_l * f * f / mode_count as f64 * variance.value,
        excess_auto: alpha_k * alpha_k * f * f * absorptance_sq.value,
        mean_current: alpha_k * f * absorptance.value,
        units: Units::Absolute,
        flags: ResultFlags {
            negative_variance: negative.get(),
            extrapolated: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn equal_strengths_give_no_long_range_correlation() {
        // Step-function black body smoothed into a Lorentzian: every σₙ equal.
        let line = LorentzianLine::unit_width(1.0).unwrap();
        let r = correlators_from_moments(
            |x| {
                let s = 1.0 - LorentzianLine::profile(x);
                SpectralMoments::exact(s, s * s)
            },
            &line,
            &DetectorPair::ideal(),
            10,
            &cfg(),
        )
        .unwrap();
        assert!(r.cross.abs() < 1e-14);
        assert!(r.mean_current > 0.0);
    }

    #[test]
    fn perfect_mirror_emits_nothing() {
        let line = LorentzianLine::unit_width(1.0).unwrap();
        let r = correlators_from_moments(
            |_| SpectralMoments::lossless(),
            &line,
            &DetectorPair::ideal(),
            4,
            &cfg(),
        )
        .unwrap();
        assert_eq!((r.cross, r.excess_auto, r.mean_current), (0.0, 0.0, 0.0));
        assert_eq!(r.auto(), Some(0.0));
    }

    #[test]
    fn weak_absorption_cavity_closed_form() {
        let (gamma0, omega_c, n) = (0.01, 2.0, 7);
        let det = DetectorPair::new(0.3, 0.8, 1.7).unwrap();
        let line = LorentzianLine::new(1e12, omega_c, gamma0).unwrap();
        let r = correlators_from_moments(
            |x| {
                let g = line.cavity_strength(x);
                SpectralMoments::from_absorptance(g, g * g)
            },
            &line,
            &det,
            n,
            &cfg(),
        )
        .unwrap();
        let f = det.occupation;
        assert_relative_eq!(r.mean_current, 0.5 * omega_c * f * det.alpha_k * gamma0, max_relative = 1e-7);
        assert_relative_eq!(
            r.cross,
            0.25 * omega_c * f * f * det.alpha_k * det.alpha_l * gamma0 * gamma0 / n as f64,
            max_relative = 1e-7
        );
        assert_relative_eq!(
            r.excess_auto,
            0.25 * omega_c * (f * det.alpha_k * gamma0).powi(2),
            max_relative = 1e-7
        );
    }

    #[test]
    fn zero_strength_is_all_zero() {
        let line = LorentzianLine::unit_width(0.0).unwrap();
        let r = correlators_from_moments(|_| unreachable!(), &line, &DetectorPair::ideal(), 3, &cfg())
            .unwrap();
        assert_eq!(r, CorrelatorResult::zero(Units::Absolute));
    }

    #[test]
    fn negative_variance_is_flagged() {
        let line = LorentzianLine::unit_width(1.0).unwrap();
        let r = correlators_from_moments(
            |x| {
                let a = 0.1 * LorentzianLine::profile(x);
                SpectralMoments::from_absorptance(a, -0.01 * a)
            },
            &line,
            &DetectorPair::ideal(),
            3,
            &cfg(),
        )
        .unwrap();
        assert!(r.flags.negative_variance);
    }

    #[test]
    fn moment_checks() {
        assert!(SpectralMoments::exact(0.5, 0.3).check(3.0).is_ok());
        assert!(SpectralMoments::exact(0.5, 0.6).check(3.0).is_err());
        assert!(SpectralMoments::exact(0.5, 0.2).check(3.0).is_err());
        assert!(SpectralMoments::exact(1.2, 1.0).check(3.0).is_err());
    }

    fn profile(a0: f64, v0: f64) -> impl Fn(f64) -> SpectralMoments {
        move |x: f64| {
            let a = a0 * LorentzianLine::profile(x);
            SpectralMoments::from_absorptance(a, v0 * a * a)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn detector_scaling(ak in 0.01f64..1.0, al in 0.01f64..1.0, f in 0.01f64..5.0, a0 in 0.01f64..1.0, v0 in 0.0f64..1.0) {
            let line = LorentzianLine::unit_width(1.0).unwrap();
            let unit = correlators_from_moments(profile(a0, v0), &line, &DetectorPair::ideal(), 5, &cfg()).unwrap();
            let det = DetectorPair::new(ak, al, f).unwrap();
            let r = correlators_from_moments(profile(a0, v0), &line, &det, 5, &cfg()).unwrap();
            prop_assert!((r.cross - ak * al * f * f * unit.cross).abs() <= 1e-12 * unit.cross.abs().max(1e-300));
            prop_assert!((r.excess_auto - ak * ak * f * f * unit.excess_auto).abs() <= 1e-12 * unit.excess_auto);
            prop_assert!((r.mean_current - ak * f * unit.mean_current).abs() <= 1e-12 * unit.mean_current);
        }

        #[test]
        fn width_scaling_and_cauchy_schwarz(a0 in 0.01f64..1.0, v0 in 0.0f64..1.0, w in 0.1f64..10.0, n in 1usize..50) {
            let unit = correlators_from_moments(profile(a0, v0), &LorentzianLine::unit_width(1.0).unwrap(), &DetectorPair::ideal(), n, &cfg()).unwrap();
            let wide = correlators_from_moments(profile(a0, v0), &LorentzianLine::new(1e9, w, 1.0).unwrap(), &DetectorPair::ideal(), n, &cfg()).unwrap();
            prop_assert!((wide.mean_current - w * unit.mean_current).abs() <= 1e-10 * wide.mean_current);
            prop_assert!(unit.excess_auto >= 0.0);
            // variance ≤ ⟨1−σ̄⟩² in these profiles, so N·C_kl ≤ C_kk − Ī_k.
            prop_assert!(unit.cross * n as f64 <= unit.excess_auto * (1.0 + 1e-9));
        }
    }
}
