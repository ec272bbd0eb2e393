//! Intensity correlations of thermal radiation emitted by absorbing random media.
//!
//! Two photodetectors looking at a thermal source see correlated photocurrents.
//! Within one transverse coherence area the familiar Hanbury Brown–Twiss
//! bunching gives the short-range correlation C_kk − Ī_k. For a partially
//! absorbing random medium a second, long-range correlation C_kl survives
//! between detectors in different modes; it is set by the *variance* of the
//! scattering strengths σₙ (eigenvalues of rr† + tt†) and vanishes for an
//! ideal black body.
//!
//! The crate provides
//!
//! * the frequency-integration engine and correlator formulas
//!   ([`correlator`], [`line`], [`quadrature`]),
//! * closed-form results for a disordered waveguide ([`waveguide`]),
//! * Monte Carlo spectral moments for an absorbing chaotic cavity ([`cavity`]),
//! * random-matrix utilities and checks of the large-N approximations ([`rmt`]),
//! * a direct photodetection simulation of thermal light ([`photosim`]).

pub mod bose;
pub mod cavity;
pub mod correlator;
pub mod error;
pub mod geometry;
pub mod line;
pub mod linalg;
pub mod photosim;
pub mod quadrature;
pub mod rmt;
pub mod rng;
pub mod stats;
pub mod waveguide;

pub use bose::{bose_einstein, BoseEinsteinInput};
pub use correlator::{correlators_from_moments, CorrelatorResult, DetectorPair, SpectralMoments, Units};
pub use error::{Error, Result};
pub use geometry::{coherence_geometry, CoherenceGeometry};
pub use line::{line_integral, LorentzianLine};
pub use quadrature::QuadratureConfig;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/waveguide.md")]
    mod waveguide {}
    #[doc = include_str!("../../../book/src/cavity.md")]
    mod cavity {}
    #[doc = include_str!("../../../book/src/rmt.md")]
    mod rmt {}
    #[doc = include_str!("../../../book/src/photosim.md")]
    mod photosim {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
