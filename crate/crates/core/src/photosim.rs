//! Direct simulation of thermal photodetection.
//!
//! Each detector mode carries a Gaussian field built from independent
//! frequency bins, and photons are counted by a Poisson process whose rate is
//! the detected intensity. Each counting window is exactly one period 2π/δω
//! of the bin grid, so within a window the bins do not beat against each
//! other on average, and the counted statistics match the discretized line
//! integrals of [`EmissionSpectrum::expected`] with no finite-window bias.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::correlator::{CorrelatorResult, ResultFlags, Units};
use crate::error::{domain, Error, Result};
use crate::linalg::C64;
use crate::rng::StreamKey;
use crate::stats::bootstrap_error;

/// Tolerance on Hermiticity and on eigenvalues of QQ† outside [0, 1].
pub const PROFILE_TOLERANCE: f64 = 1e-10;
/// Field samples per window per frequency bin.
pub const SAMPLES_PER_BIN: usize = 8;
/// Fewer windows than this give unreliable bootstrap errors.
pub const MIN_WINDOWS: usize = 1000;

/// QQ†(ω) on a grid of equally spaced frequency bins, and the thermal occupation.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionSpectrum {
    bin_width: f64,
    profile: Vec<DMatrix<C64>>,
    occupation: f64,
    /// Per bin, a factor L with L L† = f·QQ†.
    factors: Vec<DMatrix<C64>>,
}

impl EmissionSpectrum {
    /// `bin_width` is δω in rad/s, `profile` holds QQ† for each bin.
    pub fn new(bin_width: f64, profile: Vec<DMatrix<C64>>, occupation: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(domain(format!("bin width must be positive, got {bin_width}")));
        }
        if !(occupation >= 0.0 && occupation.is_finite()) {
            return Err(domain(format!("occupation must be non-negative, got {occupation}")));
        }
        let n = profile.first().map(|m| m.nrows()).ok_or_else(|| domain("empty spectrum"))?;
        if n == 0 {
            return Err(domain("spectrum needs at least one mode"));
        }
        let mut factors = Vec::with_capacity(profile.len());
        for qq in &profile {
            if qq.nrows() != n || qq.ncols() != n {
                return Err(domain("every bin needs an N×N matrix of the same size"));
            }
            let skew = (qq - qq.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if skew > PROFILE_TOLERANCE {
                return Err(domain(format!("QQ† not Hermitian (defect {skew:e})")));
            }
            let eig = qq.clone().symmetric_eigen();
            let mut scaled = eig.eigenvectors.clone();
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                if lambda < -PROFILE_TOLERANCE {
                    return Err(Error::NotPositiveSemidefinite(lambda));
                }
                if lambda > 1.0 + PROFILE_TOLERANCE {
                    return Err(Error::SubUnitarity(lambda));
                }
                let s = (occupation * lambda.max(0.0)).sqrt();
                scaled.column_mut(j).scale_mut(s);
            }
            factors.push(scaled);
        }
        Ok(Self {
            bin_width,
            profile,
            occupation,
            factors,
        })
    }

    /// The same QQ† in every one of `bins` bins spanning `band_width` rad/s.
    pub fn flat(qq: DMatrix<C64>, bins: usize, band_width: f64, occupation: f64) -> Result<Self> {
        if bins == 0 {
            return Err(domain("need at least one bin"));
        }
        Self::new(band_width / bins as f64, vec![qq; bins], occupation)
    }

    pub fn mode_count(&self) -> usize {
        self.profile[0].nrows()
    }

    pub fn bins(&self) -> usize {
        self.profile.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn occupation(&self) -> f64 {
        self.occupation
    }

    /// Counting window 2π/δω.
    pub fn window(&self) -> f64 {
        2.0 * PI / self.bin_width
    }

    /// Correlators from the bin sums: C_kl − δ_kl Ī_k = α_kα_l f² Σ|(QQ†)_kl|² δω/2π
    /// and Ī_k = α_k f Σ(QQ†)_kk δω/2π.
    pub fn expected(&self, detectors: &Photodetectors) -> Result<CorrelatorResult> {
        detectors.check(self.mode_count())?;
        let [k, l] = detectors.modes;
        let [ak, al] = detectors.efficiency;
        let w = self.bin_width / (2.0 * PI);
        let f = self.occupation;
        let sum = |g: &dyn Fn(&DMatrix<C64>) -> f64| self.profile.iter().map(g).sum::<f64>() * w;
        Ok(CorrelatorResult {
            cross: ak * al * f * f * sum(&|q| q[(k, l)].norm_sqr()),
            excess_auto: ak * ak * f * f * sum(&|q| q[(k, k)].norm_sqr()),
            mean_current: ak * f * sum(&|q| q[(k, k)].re),
            units: Units::Absolute,
            flags: ResultFlags::default(),
        })
    }
}

/// Two detectors: which modes they see and their quantum efficiencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Photodetectors {
    pub modes: [usize; 2],
    pub efficiency: [f64; 2],
}

impl Photodetectors {
    pub fn new(modes: [usize; 2], efficiency: [f64; 2]) -> Result<Self> {
        if modes[0] == modes[1] {
            return Err(domain("the two detectors must see different modes"));
        }
        for a in efficiency {
            if !(0.0..=1.0).contains(&a) {
                return Err(domain(format!("efficiency must lie in [0, 1], got {a}")));
            }
        }
        Ok(Self { modes, efficiency })
    }

    fn check(&self, mode_count: usize) -> Result<()> {
        if self.modes.iter().any(|&m| m >= mode_count) {
            return Err(domain(format!("detector mode out of range for {mode_count} modes")));
        }
        Ok(())
    }
}

/// Complex field amplitudes over one window, one row per mode; |a|² is in photons/s.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSeries {
    pub window: f64,
    pub amplitudes: Vec<Vec<C64>>,
}

impl FieldSeries {
    /// Time step between samples.
    pub fn step(&self) -> f64 {
        self.window / self.amplitudes.first().map_or(1, |a| a.len()) as f64
    }

    /// A field that does not fluctuate: `amplitudes[m]` at every one of `samples` points.
    pub fn constant(amplitudes: &[C64], samples: usize, window: f64) -> Self {
        Self {
            window,
            amplitudes: amplitudes.iter().map(|&a| vec![a; samples]).collect(),
        }
    }
}

fn circular_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One window of field: a_m(t) = Σ_b √(δω/2π) z_{m,b} e^{−iω_b t} with
/// z_b circular Gaussian of covariance f·QQ†(ω_b).
///
/// Sampled at [`SAMPLES_PER_BIN`] points per bin, which resolves the fastest
/// beat across the band; |a|² is a trigonometric polynomial of lower degree
/// than the sample count, so the sampled mean is its exact window average.
pub fn synthesize_window(spectrum: &EmissionSpectrum, rng: &mut ChaCha8Rng) -> FieldSeries {
    let n = spectrum.mode_count();
    let bins = spectrum.bins();
    let len = SAMPLES_PER_BIN * bins;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let amp = (spectrum.bin_width / (2.0 * PI)).sqrt();
    let mut rows = vec![vec![C64::new(0.0, 0.0); len]; n];
    for (b, factor) in spectrum.factors.iter().enumerate() {
        let w: Vec<C64> = (0..n).map(|_| circular_gaussian(rng)).collect();
        for (m, row) in rows.iter_mut().enumerate() {
            let z: C64 = (0..n).map(|j| factor[(m, j)] * w[j]).sum();
            row[b] = z * amp;
        }
    }
    for row in rows.iter_mut() {
        fft.process(row);
    }
    FieldSeries {
        window: spectrum.window(),
        amplitudes: rows,
    }
}

/// Independent windows of field, reproducible from `key`.
pub fn synthesize_fields(spectrum: &EmissionSpectrum, windows: usize, key: StreamKey) -> Vec<FieldSeries> {
    (0..windows)
        .into_par_iter()
        .map(|i| synthesize_window(spectrum, &mut key.child(0).rng(i as u64)))
        .collect()
}

/// Photocounts n_k, n_l per window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotocountRecord {
    pub window: f64,
    pub counts: Vec<[u64; 2]>,
}

/// Count photons by thinning: candidate events at the peak rate over the
/// window, each kept with probability rate(t)/peak, rate = α|a(t)|².
fn count_photons(samples: &[C64], efficiency: f64, step: f64, rng: &mut ChaCha8Rng) -> u64 {
    let peak = samples.iter().map(|a| efficiency * a.norm_sqr()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return 0;
    }
    let expected = peak * step * samples.len() as f64;
    let candidates = Poisson::new(expected).map_or(0.0, |p| p.sample(rng)) as u64;
    let mut kept = 0;
    for _ in 0..candidates {
        let j = rng.random_range(0..samples.len());
        if rng.random::<f64>() * peak < efficiency * samples[j].norm_sqr() {
            kept += 1;
        }
    }
    kept
}

fn detect_window(field: &FieldSeries, detectors: &Photodetectors, rng: &mut ChaCha8Rng) -> [u64; 2] {
    let step = field.step();
    let [k, l] = detectors.modes;
    [
        count_photons(&field.amplitudes[k], detectors.efficiency[0], step, rng),
        count_photons(&field.amplitudes[l], detectors.efficiency[1], step, rng),
    ]
}

/// Count photons in each window of `fields`.
pub fn detect(fields: &[FieldSeries], detectors: &Photodetectors, key: StreamKey) -> Result<PhotocountRecord> {
    let first = fields.first().ok_or_else(|| domain("no field windows"))?;
    detectors.check(first.amplitudes.len())?;
    let counts = fields
        .par_iter()
        .enumerate()
        .map(|(i, f)| detect_window(f, detectors, &mut key.child(1).rng(i as u64)))
        .collect();
    Ok(PhotocountRecord {
        window: first.window,
        counts,
    })
}

/// Synthesize and detect window by window without keeping the fields.
///
/// Gives the same counts as [`synthesize_fields`] followed by [`detect`] with the same key.
pub fn simulate_photocounts(
    spectrum: &EmissionSpectrum,
    detectors: &Photodetectors,
    windows: usize,
    key: StreamKey,
) -> Result<PhotocountRecord> {
    detectors.check(spectrum.mode_count())?;
    let counts = (0..windows)
        .into_par_iter()
        .map(|i| {
            let field = synthesize_window(spectrum, &mut key.child(0).rng(i as u64));
            detect_window(&field, detectors, &mut key.child(1).rng(i as u64))
        })
        .collect();
    Ok(PhotocountRecord {
        window: spectrum.window(),
        counts,
    })
}

impl PhotocountRecord {
    /// CSV with `window_index,n_k,n_l`, preceded by the given `#` lines.
    pub fn write_csv<W: Write>(&self, mut out: W, metadata: &[String]) -> Result<()> {
        for line in metadata {
            writeln!(out, "{line}")?;
        }
        writeln!(out, "# window: {}", self.window)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window_index", "n_k", "n_l"])?;
        for (i, [a, b]) in self.counts.iter().enumerate() {
            w.write_record([i.to_string(), a.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Statistical errors of [`EmpiricalCorrelators`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateErrors {
    pub cross: f64,
    pub auto: f64,
    pub excess_auto: f64,
    pub mean_current: f64,
}

/// Correlators estimated from counts: C_kl = cov(n_k, n_l)/t, C_kk = var(n_k)/t, Ī_k = n̄_k/t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCorrelators {
    pub result: CorrelatorResult,
    pub auto: f64,
    pub mean_current_l: f64,
    pub errors: EstimateErrors,
    pub windows: usize,
    /// Fewer than [`MIN_WINDOWS`] windows: the errors are themselves unreliable.
    pub wide_errors: bool,
}

impl EmpiricalCorrelators {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn moments(counts: &[[u64; 2]], idx: &[usize], t: f64) -> [f64; 4] {
    let n = idx.len() as f64;
    let (mut sk, mut sl, mut skk, mut skl) = (0.0, 0.0, 0.0, 0.0);
    for &i in idx {
        let [a, b] = counts[i];
        let (a, b) = (a as f64, b as f64);
        sk += a;
        sl += b;
        skk += a * a;
        skl += a * b;
    }
    let (mk, ml) = (sk / n, sl / n);
    let var = (skk - n * mk * mk) / (n - 1.0);
    let cov = (skl - n * mk * ml) / (n - 1.0);
    [cov / t, var / t, mk / t, ml / t]
}

/// Estimate correlators with bootstrap errors over windows.
pub fn estimate_correlators(
    record: &PhotocountRecord,
    replicates: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EmpiricalCorrelators> {
    let n = record.counts.len();
    if n < 2 {
        return Err(domain("need at least two windows"));
    }
    let t = record.window;
    let all: Vec<usize> = (0..n).collect();
    let [cross, auto, mean_k, mean_l] = moments(&record.counts, &all, t);
    let mut err = |j: usize| bootstrap_error(rng, n, replicates, |idx| moments(&record.counts, idx, t)[j]);
    let errors = EstimateErrors {
        cross: err(0),
        auto: err(1),
        mean_current: err(2),
        excess_auto: 0.0,
    };
    let excess_auto = bootstrap_error(rng, n, replicates, |idx| {
        let m = moments(&record.counts, idx, t);
        m[1] - m[2]
    });
    Ok(EmpiricalCorrelators {
        result: CorrelatorResult {
            cross,
            excess_auto: auto - mean_k,
            mean_current: mean_k,
            units: Units::Absolute,
            flags: ResultFlags::default(),
        },
        auto,
        mean_current_l: mean_l,
        errors: EstimateErrors { excess_auto, ..errors },
        windows: n,
        wide_errors: n < MIN_WINDOWS,
    })
}
