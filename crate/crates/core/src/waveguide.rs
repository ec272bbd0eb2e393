//! Weakly absorbing, strongly disordered waveguide.
//!
//! For 1/N ≪ l/ξ ≪ 1 and arbitrary s = L/ξ the spectral moments are known in
//! closed form:
//!
//! ```text
//! ⟨σ̄²⟩ − ⟨σ̄⟩² = (2l/3ξ) B(s)
//! B(s) = coth³s − 3/sinh s + s/sinh²s + (s coth s − 1)/sinh³s − s/sinh⁴s
//! ⟨1 − σ̄⟩     = (4l/3ξ) tanh(s/2)
//! ```
//!
//! Across a Lorentzian line both l/ξ and s fall off as 1/√(1 + x²).

use serde::{Deserialize, Serialize};

use crate::correlator::{correlators_from_moments, CorrelatorResult, DetectorPair, ResultFlags, SpectralMoments, Units};
use crate::error::{domain, Result};
use crate::line::LorentzianLine;
use crate::quadrature::QuadratureConfig;

/// Below this length ratio B(s) is summed from its Taylor series.
pub const SERIES_CUTOFF: f64 = 0.5;

// Taylor coefficients of B(s) for the odd powers s³, s⁵, …, s²¹.
const SERIES: [f64; 10] = [
    2.0 / 15.0,
    -1.0 / 28.0,
    179.0 / 25200.0,
    -491.0 / 399_168.0,
    8227.0 / 42_042_000.0,
    -18269.0 / 622_702_080.0,
    935_106_061.0 / 222_304_642_560_000.0,
    -918_105_263.0 / 1_576_880_931_225_600.0,
    130_988_584_711.0 / 1_672_620_130_621_440_000.0,
    -1_298_253_329.0 / 126_218_224_484_352_000.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideParams {
    pub mode_count: usize,
    /// s₀ = L/ξ₀.
    pub length_ratio: f64,
    /// l/ξ₀.
    pub mean_free_path_ratio: f64,
}

impl WaveguideParams {
    pub fn new(mode_count: usize, length_ratio: f64, mean_free_path_ratio: f64) -> Result<Self> {
        if mode_count == 0 {
            return Err(domain("waveguide needs at least one mode"));
        }
        if !(length_ratio >= 0.0 && length_ratio.is_finite()) {
            return Err(domain(format!("L/ξ₀ must be non-negative, got {length_ratio}")));
        }
        if !(mean_free_path_ratio > 0.0 && mean_free_path_ratio.is_finite()) {
            return Err(domain(format!("l/ξ₀ must be positive, got {mean_free_path_ratio}")));
        }
        Ok(Self {
            mode_count,
            length_ratio,
            mean_free_path_ratio,
        })
    }

    /// Whether 1/N ≪ l/ξ₀ ≪ 1 holds, read as N·l/ξ₀ > 10 and l/ξ₀ < 0.1.
    pub fn in_diffusive_regime(&self) -> bool {
        self.mode_count as f64 * self.mean_free_path_ratio > 10.0 && self.mean_free_path_ratio < 0.1
    }
}

/// The bracket B(s) of the variance, evaluated without cancellation.
pub fn variance_bracket(s: f64) -> f64 {
    assert!(s >= 0.0, "variance_bracket needs s ≥ 0, got {s}");
    if s < SERIES_CUTOFF {
        let s2 = s * s;
        let poly = SERIES.iter().rev().fold(0.0, |acc, c| acc * s2 + c);
        return poly * s2 * s;
    }
    if s > 40.0 {
        // All 1/sinh terms are below e^{-40}; coth³ s = 1 to double precision.
        return 1.0;
    }
    let inv_sinh = 1.0 / s.sinh();
    let coth = 1.0 / s.tanh();
    coth.powi(3) - 3.0 * inv_sinh + s * inv_sinh.powi(2) + (s * coth - 1.0) * inv_sinh.powi(3)
        - s * inv_sinh.powi(4)
}

/// Variance ⟨σ̄²⟩ − ⟨σ̄⟩² = (2/3)(l/ξ) B(s).
pub fn moment_variance(s: f64, mean_free_path_ratio: f64) -> f64 {
    2.0 / 3.0 * mean_free_path_ratio * variance_bracket(s)
}

/// ⟨1 − σ̄⟩ = (4/3)(l/ξ) tanh(s/2), with `mean_free_path_ratio` the local l/ξ.
pub fn mean_absorptance(s: f64, mean_free_path_ratio: f64) -> f64 {
    assert!(s >= 0.0 && mean_free_path_ratio > 0.0);
    4.0 / 3.0 * mean_free_path_ratio * (0.5 * s).tanh()
}

/// Spectral moments at detuning x for a waveguide on a Lorentzian line.
pub fn moments_at(params: &WaveguideParams, x: f64) -> SpectralMoments {
    let widen = LorentzianLine::absorption_length_ratio(x);
    let s = params.length_ratio / widen;
    let lr = params.mean_free_path_ratio / widen;
    SpectralMoments::from_absorptance(mean_absorptance(s, lr), moment_variance(s, lr))
}

/// Correlators in reduced units plus the normalized cross ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideCorrelators {
    pub reduced: CorrelatorResult,
    /// C_kl / √(Ī_k Ī_l) for the given detectors and N.
    pub cross_ratio: f64,
}

/// Integrate the closed-form moments across the line.
///
/// The ensemble is evaluated with the actual l/ξ₀ and unit detectors on a
/// line of unit width; the result is then divided by the reduced-unit scale
/// (Ω_c l f² α_k α_l / N ξ₀ for C_kl, and so on).
pub fn waveguide_correlators(
    params: &WaveguideParams,
    detectors: &DetectorPair,
    config: &QuadratureConfig,
) -> Result<WaveguideCorrelators> {
    let flags = ResultFlags {
        negative_variance: false,
        extrapolated: !params.in_diffusive_regime(),
    };
    if params.length_ratio == 0.0 {
        return Ok(WaveguideCorrelators {
            reduced: CorrelatorResult {
                flags,
                ..CorrelatorResult::zero(Units::WaveguideReduced)
            },
            cross_ratio: 0.0,
        });
    }
    let line = LorentzianLine::unit_width(params.length_ratio)?;
    let n = params.mode_count;
    let lr = params.mean_free_path_ratio;
    let abs = correlators_from_moments(|x| moments_at(params, x), &line, &DetectorPair::ideal(), n, config)?;
    let reduced = CorrelatorResult {
        cross: abs.cross * n as f64 / lr,
        excess_auto: abs.excess_auto / (lr * lr),
        mean_current: abs.mean_current / lr,
        units: Units::WaveguideReduced,
        flags: ResultFlags {
            negative_variance: abs.flags.negative_variance,
            ..flags
        },
    };
    Ok(WaveguideCorrelators {
        reduced,
        cross_ratio: cross_ratio(&reduced, detectors, n),
    })
}

/// C_kl/√(Ī_k Ī_l) = f √(α_k α_l)/N · (reduced C_kl / reduced Ī).
fn cross_ratio(reduced: &CorrelatorResult, detectors: &DetectorPair, n: usize) -> f64 {
    if reduced.mean_current == 0.0 {
        return 0.0;
    }
    detectors.occupation * (detectors.alpha_k * detectors.alpha_l).sqrt() / n as f64 * reduced.cross
        / reduced.mean_current
}

/// Closed forms for s₀ → 0 in reduced units.
///
/// Expanding the moments to leading order in s₀ gives C_kl = s₀³/45,
/// C_kk − Ī_k = s₀²/9 and Ī_k = s₀/3.
pub fn thin_sample_asymptotics(params: &WaveguideParams) -> CorrelatorResult {
    let s0 = params.length_ratio;
    CorrelatorResult {
        cross: s0.powi(3) / 45.0,
        excess_auto: s0 * s0 / 9.0,
        mean_current: s0 / 3.0,
        units: Units::WaveguideReduced,
        flags: ResultFlags {
            negative_variance: false,
            extrapolated: !params.in_diffusive_regime(),
        },
    }
}

/// Limits for s₀ → ∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThickSampleLimits {
    /// C_kl/√(Ī_k Ī_l) → f √(α_k α_l) / 2N.
    pub cross_ratio_limit: f64,
    /// Reduced C_kk − Ī_k → 8/9.
    pub short_range_limit: f64,
}

pub fn thick_sample_limits(detectors: &DetectorPair, mode_count: usize) -> Result<ThickSampleLimits> {
    if mode_count == 0 {
        return Err(domain("mode count must be at least 1"));
    }
    let zero = detectors.alpha_k == 0.0;
    Ok(ThickSampleLimits {
        cross_ratio_limit: detectors.occupation * (detectors.alpha_k * detectors.alpha_l).sqrt()
            / (2.0 * mode_count as f64),
        short_range_limit: if zero { 0.0 } else { 8.0 / 9.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn direct(s: f64) -> f64 {
        let inv_sinh = 1.0 / s.sinh();
        let coth = 1.0 / s.tanh();
        coth.powi(3) - 3.0 * inv_sinh + s * inv_sinh.powi(2) + (s * coth - 1.0) * inv_sinh.powi(3)
            - s * inv_sinh.powi(4)
    }

    #[test]
    fn bracket_reference_values() {
        // 50-digit evaluations of the five-term expression.
        assert_relative_eq!(variance_bracket(1.0), 0.103_662_204_091_638_897_6, max_relative = 1e-13);
        assert_relative_eq!(variance_bracket(0.5), 0.015_603_778_423_819_915_78, max_relative = 1e-12);
        assert_relative_eq!(variance_bracket(0.3), 0.003_514_743_880_790_844_195, max_relative = 1e-12);
        assert_relative_eq!(variance_bracket(0.1), 1.329_768_995_655_461_950e-4, max_relative = 1e-12);
        assert_relative_eq!(variance_bracket(1e-2), 1.333_297_619_757_924_208e-7, max_relative = 1e-12);
        assert_relative_eq!(variance_bracket(1e-3), 1.333_332_976_190_547_222e-10, max_relative = 1e-12);
        assert_relative_eq!(variance_bracket(10.0), 0.999_727_695_240_667_490_9, max_relative = 1e-13);
        assert_eq!(variance_bracket(0.0), 0.0);
        assert_eq!(variance_bracket(1e3), 1.0);
    }

    #[test]
    fn series_and_direct_agree_at_cutoff() {
        let s = SERIES_CUTOFF;
        assert_relative_eq!(variance_bracket(s * (1.0 - 1e-12)), direct(s), max_relative = 1e-11);
    }

    #[test]
    fn small_s_leading_term() {
        for s in [1e-4, 1e-3, 1e-2] {
            assert_relative_eq!(variance_bracket(s) / s.powi(3), 2.0 / 15.0, max_relative = s * s);
        }
    }

    #[test]
    fn bracket_is_monotone_and_bounded() {
        let mut prev = 0.0;
        for i in 1..=4000 {
            let s = i as f64 * 0.01;
            let b = variance_bracket(s);
            assert!(b >= prev, "B not monotone at s={s}");
            assert!(b <= 1.0 + 1e-15);
            prev = b;
        }
    }

    #[test]
    fn absorptance_values() {
        assert_eq!(mean_absorptance(0.0, 0.01), 0.0);
        assert_relative_eq!(mean_absorptance(2.0, 0.01), 0.010_154_588_746_076_865, max_relative = 1e-14);
        assert_relative_eq!(mean_absorptance(1e3, 0.01), 0.04 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn thin_sample_closed_forms() {
        let p = WaveguideParams::new(1000, 0.1, 0.01).unwrap();
        let t = thin_sample_asymptotics(&p);
        assert_relative_eq!(t.cross, 2.0e-5 / 0.9, max_relative = 1e-14);
        assert_relative_eq!(t.excess_auto, 0.01 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(t.mean_current, 0.1 / 3.0, max_relative = 1e-14);
        let zero = thin_sample_asymptotics(&WaveguideParams::new(1000, 0.0, 0.01).unwrap());
        assert_eq!((zero.cross, zero.excess_auto, zero.mean_current), (0.0, 0.0, 0.0));
    }

    #[test]
    fn thick_limits() {
        let l = thick_sample_limits(&DetectorPair::ideal(), 10).unwrap();
        assert_relative_eq!(l.cross_ratio_limit, 0.05);
        assert_relative_eq!(l.short_range_limit, 8.0 / 9.0);
        let off = thick_sample_limits(&DetectorPair::new(0.0, 1.0, 1.0).unwrap(), 10).unwrap();
        assert_eq!((off.cross_ratio_limit, off.short_range_limit), (0.0, 0.0));
    }

    #[test]
    fn regime_flag() {
        assert!(WaveguideParams::new(10_000, 1.0, 0.01).unwrap().in_diffusive_regime());
        assert!(!WaveguideParams::new(100, 1.0, 0.01).unwrap().in_diffusive_regime());
        assert!(!WaveguideParams::new(10_000, 1.0, 0.5).unwrap().in_diffusive_regime());
        let r = waveguide_correlators(
            &WaveguideParams::new(100, 1.0, 0.5).unwrap(),
            &DetectorPair::ideal(),
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert!(r.reduced.flags.extrapolated);
    }

    #[test]
    fn zero_length_is_zero() {
        let r = waveguide_correlators(
            &WaveguideParams::new(100, 0.0, 0.01).unwrap(),
            &DetectorPair::ideal(),
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert_eq!(r.reduced.cross, 0.0);
        assert_eq!(r.reduced.mean_current, 0.0);
    }
}
